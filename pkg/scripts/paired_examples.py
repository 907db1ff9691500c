"""Write a contact sheet of day/night pairs synthesized from the bundled sample.

Top row is the daylight input, the rows below are night renderings for
different per-image seeds.  Uses procedural glare assets unless --assets is given.
"""

import argparse

import numpy as np

from nightforge.assets import AssetCatalog, LightAsset, load_catalog
from nightforge.imageio import write_png8
from nightforge.pipeline import DepthMap, PipelineConfig, synthesize_pair
from nightforge.sample import daylight_sample, glare_pattern


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="paired_examples.png")
    ap.add_argument("--assets")
    ap.add_argument("--n", type=int, default=4)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    if args.assets:
        catalog = load_catalog(args.assets)
    else:
        catalog = AssetCatalog(tuple(LightAsset(f"glare_{i}", glare_pattern(48, seed=i)) for i in range(4)))
    rgb, depth = daylight_sample()
    cfg = PipelineConfig()
    rows = [np.concatenate([rgb] * 2, axis=1)]
    for i in range(args.n):
        pair = synthesize_pair(rgb, DepthMap(depth), cfg, args.seed + i, catalog)
        rows.append(np.concatenate([pair.flare_rgb, pair.night_rgb], axis=1))
        print(f"seed {args.seed + i}: n_f={pair.draw.n_f} s_b={pair.draw.s_b:.2f} g={pair.draw.g_f:.2f} K={pair.noise.k:.3f}")
    write_png8(args.out, np.concatenate(rows, axis=0))
    print(f"wrote {args.out} (left: flare only, right: flare + noise)")


if __name__ == "__main__":
    main()
