"""Command line entry point: ``nightforge {synth,verify,fuse,fuse-init,eval}``.

Exit codes: 0 success, 1 config/manifest/input error, 2 strict-mode record
failure, 3 ``verify`` found drift.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from nightforge.errors import NightforgeError
from nightforge.fusion import FusionParams, concat_aux, fusion_forward, illumination_guidance, load_params, save_params
from nightforge.imageio import read_pfm, write_pfm
from nightforge.metrics import EvalConfig, aggregate, compute_metrics
from nightforge.pipeline import PipelineConfig, StrictFailure, load_config, run_dataset, verify_manifest

EXIT_OK, EXIT_CONFIG, EXIT_STRICT, EXIT_DRIFT = 0, 1, 2, 3

log = logging.getLogger("nightforge")


def cmd_synth(args) -> int:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    changes = {}
    if args.assets:
        changes["asset_dir"] = str(args.assets)
    if args.out:
        changes["output_dir"] = str(args.out)
    if args.seed is not None:
        changes["global_seed"] = args.seed
    if args.emit_guidance:
        changes["emit_guidance"] = True
    cfg = cfg.replace(**changes)
    try:
        result = run_dataset(args.input, cfg, strict=args.strict, workers=args.workers)
    except StrictFailure as exc:
        for f in exc.failures:
            print(f"FAILED {f['source_id']}: {f['error']}", file=sys.stderr)
        return EXIT_STRICT
    print(f"wrote {len(result.records)} pair(s) to {cfg.output_dir}; {len(result.failures)} failure(s)")
    for f in result.failures:
        print(f"FAILED {f['source_id']}: {f['error']}", file=sys.stderr)
    return EXIT_OK


def cmd_verify(args) -> int:
    report = verify_manifest(args.manifest, regenerate=args.regenerate)
    for d in report.drift:
        print(f"DRIFT {d['file']}: {d['reason']}")
    print(f"checked {report.n_files} file(s), {len(report.drift)} drifted")
    return EXIT_OK if report.ok else EXIT_DRIFT


def cmd_fuse(args) -> int:
    night = read_pfm(args.input)
    guidance = read_pfm(args.guidance) if args.guidance else illumination_guidance(night)
    params = load_params(args.params)
    out, _ = fusion_forward(concat_aux(night.astype(np.float64), guidance.astype(np.float64)), params)
    write_pfm(args.out, out.astype(np.float32))
    print(f"wrote {args.out} {out.shape}")
    return EXIT_OK


def cmd_fuse_init(args) -> int:
    params = FusionParams.init(args.c_in, args.c3, args.c1, seed=args.seed)
    save_params(args.out, params)
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = EvalConfig(max_depth=args.max_depth, min_depth=args.min_depth, alignment=args.align)
    pred_dir, gt_dir = Path(args.pred_dir), Path(args.gt_dir)
    names = sorted(p.name for p in pred_dir.glob("*.pfm"))
    per_image, reports = {}, []
    for name in names:
        gt_path = gt_dir / name
        if not gt_path.exists():
            log.warning("no ground truth for %s", name)
            continue
        rep = compute_metrics(read_pfm(pred_dir / name)[..., 0], read_pfm(gt_path)[..., 0], cfg)
        per_image[name] = rep.to_dict()
        reports.append(rep)
    if not reports:
        print("no prediction/ground-truth pairs found", file=sys.stderr)
        return EXIT_CONFIG
    agg = aggregate(reports)
    doc = {
        "config": {"max_depth": cfg.max_depth, "min_depth": cfg.min_depth, "alignment": cfg.alignment},
        "per_image": per_image,
        "aggregate": agg.to_dict(),
    }
    Path(args.report).write_text(json.dumps(doc, indent=2) + "\n")
    print(
        f"{len(reports)} image(s)  abs_rel {agg.abs_rel:.4f}  sq_rel {agg.sq_rel:.4f}  rmse {agg.rmse:.4f}"
        f"  rmse_log {agg.rmse_log:.4f}  d1 {agg.delta1:.4f}  d2 {agg.delta2:.4f}  d3 {agg.delta3:.4f}"
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nightforge", description="Synthesize paired low-light RGB-D data and run the fusion and depth-metric kernels.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="synthesize low-light pairs from a daylight manifest")
    p.add_argument("--input", required=True, help="tab-separated rgb_path<TAB>depth_path manifest")
    p.add_argument("--assets", help="light-source asset directory")
    p.add_argument("--out", help="output directory")
    p.add_argument("--config", help="YAML config file")
    p.add_argument("--seed", type=int, help="global seed (unsigned 64-bit)")
    p.add_argument("--strict", action="store_true", help="abort with exit code 2 on any record failure")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--emit-guidance", action="store_true", help="also write illumination guidance PFMs")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("verify", help="re-hash the outputs listed in a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--regenerate", action="store_true", help="also re-synthesize and compare bytes")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("fuse", help="apply the multiscale fusion kernel to one image")
    p.add_argument("--input", required=True, help="low-light image PFM (H, W, 3)")
    p.add_argument("--guidance", help="guidance PFM (H, W, 1); computed from --input if omitted")
    p.add_argument("--params", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("fuse-init", help="write a seeded random fusion parameter file")
    p.add_argument("--c-in", type=int, default=4)
    p.add_argument("--c3", type=int, default=8)
    p.add_argument("--c1", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fuse_init)

    p = sub.add_parser("eval", help="depth metrics over matching PFM files")
    p.add_argument("--pred-dir", required=True)
    p.add_argument("--gt-dir", required=True)
    p.add_argument("--max-depth", type=float, required=True)
    p.add_argument("--min-depth", type=float, default=1e-3)
    p.add_argument("--align", choices=["none", "median"], default="none")
    p.add_argument("--report", required=True)
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (NightforgeError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
