from pathlib import Path

import numpy as np
import pytest

from nightforge.assets import NO_AUGMENT
from nightforge.flare import FlareConfig
from nightforge.imageio import write_pfm, write_png16
from nightforge.noise import NoiseModelRanges
from nightforge.pipeline import PipelineConfig
from nightforge.sample import glare_pattern, render_daylight_scene


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def asset_dir(tmp_path):
    d = tmp_path / "assets"
    d.mkdir()
    for i in range(3):
        write_png16(d / f"glare_{i}.png", glare_pattern(48, seed=i))
    return d


@pytest.fixture
def zero_asset_dir(tmp_path):
    d = tmp_path / "zero_assets"
    d.mkdir()
    write_png16(d / "black.png", np.zeros((16, 16, 3)))
    return d


def identity_config(asset_dir) -> PipelineConfig:
    """Every stage at its identity limit: no darkening, gamma 1, no noise."""
    return PipelineConfig(
        asset_dir=str(asset_dir),
        flare=FlareConfig(s_b_range=(1.0, 1.0), g_f_range=(1.0, 1.0)),
        noise=NoiseModelRanges.disabled(),
        augment=NO_AUGMENT,
    )


def make_batch(root: Path, n: int, size=(32, 40)) -> Path:
    """Write ``n`` small daylight RGB-D pairs and a manifest; return the manifest path."""
    root.mkdir(parents=True, exist_ok=True)
    lines = []
    for i in range(n):
        rgb, depth = render_daylight_scene(*size, seed=i)
        write_png16(root / f"day_{i:02d}.png", rgb)
        write_pfm(root / f"day_{i:02d}.pfm", depth)
        lines.append(f"day_{i:02d}.png\tday_{i:02d}.pfm")
    manifest = root / "inputs.tsv"
    manifest.write_text("\n".join(lines) + "\n")
    return manifest


def hash_tree(directory: Path) -> dict:
    import hashlib

    return {
        p.name: hashlib.sha256(p.read_bytes()).hexdigest()
        for p in sorted(directory.iterdir())
        if p.is_file()
    }
