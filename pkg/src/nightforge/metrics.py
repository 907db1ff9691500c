"""Monocular depth error and accuracy metrics with depth capping.

Over the valid pixels (finite ground truth inside [min_depth, max_depth]),
with predictions clamped to the same interval:

    abs_rel  = mean(|p - g| / g)
    sq_rel   = mean((p - g)^2 / g)
    rmse     = sqrt(mean((p - g)^2))
    rmse_log = sqrt(mean((ln p - ln g)^2))
    delta_k  = mean(max(p / g, g / p) < 1.25 ** k),  k = 1, 2, 3
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from nightforge.errors import DimMismatch, EmptyList, EmptyMask, InvalidConfig, ZeroMedian

ALIGNMENTS = ("none", "median")


@dataclass(frozen=True)
class EvalConfig:
    max_depth: float = 60.0
    min_depth: float = 1e-3
    alignment: str = "none"
    clamp_pred: bool = True

    def __post_init__(self):
        if not (0 < self.min_depth < self.max_depth):
            raise InvalidConfig(f"need 0 < min_depth < max_depth, got {self.min_depth}, {self.max_depth}")
        if self.alignment not in ALIGNMENTS:
            raise InvalidConfig(f"alignment must be one of {ALIGNMENTS}, got {self.alignment!r}")


@dataclass(frozen=True)
class MetricsReport:
    abs_rel: float
    sq_rel: float
    rmse: float
    rmse_log: float
    delta1: float
    delta2: float
    delta3: float
    n_valid: int

    def to_dict(self) -> dict:
        return asdict(self)


def valid_mask(gt: np.ndarray, cfg: EvalConfig) -> np.ndarray:
    gt = np.asarray(gt)
    with np.errstate(invalid="ignore"):
        return np.isfinite(gt) & (gt >= cfg.min_depth) & (gt <= cfg.max_depth)


def align_median(pred: np.ndarray, gt: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Scale ``pred`` so its median over ``mask`` matches that of ``gt``."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if pred.shape != gt.shape or mask.shape != gt.shape:
        raise DimMismatch(f"shapes differ: pred {pred.shape}, gt {gt.shape}, mask {mask.shape}")
    if not mask.any():
        raise EmptyMask("alignment mask selects no pixels")
    med_pred = float(np.median(pred[mask]))
    if med_pred == 0.0 or not math.isfinite(med_pred):
        raise ZeroMedian("median of the prediction is zero or non-finite")
    return pred * (float(np.median(gt[mask])) / med_pred)


def _sums(p: np.ndarray, g: np.ndarray) -> dict:
    diff = p - g
    ratio = np.maximum(p / g, g / p)
    return {
        "abs_rel": float(np.sum(np.abs(diff) / g)),
        "sq_rel": float(np.sum(diff**2 / g)),
        "sq": float(np.sum(diff**2)),
        "sq_log": float(np.sum((np.log(p) - np.log(g)) ** 2)),
        "d1": int(np.sum(ratio < 1.25)),
        "d2": int(np.sum(ratio < 1.25**2)),
        "d3": int(np.sum(ratio < 1.25**3)),
        "n": int(p.size),
    }


def _from_sums(s: dict) -> MetricsReport:
    n = s["n"]
    return MetricsReport(
        abs_rel=s["abs_rel"] / n,
        sq_rel=s["sq_rel"] / n,
        rmse=math.sqrt(s["sq"] / n),
        rmse_log=math.sqrt(s["sq_log"] / n),
        delta1=s["d1"] / n,
        delta2=s["d2"] / n,
        delta3=s["d3"] / n,
        n_valid=n,
    )


def compute_metrics(pred: np.ndarray, gt: np.ndarray, cfg: EvalConfig = EvalConfig()) -> MetricsReport:
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise DimMismatch(f"pred {pred.shape} and gt {gt.shape} differ")
    mask = valid_mask(gt, cfg)
    if not mask.any():
        raise EmptyMask("no valid ground-truth pixels")
    if cfg.alignment == "median":
        pred = align_median(pred, gt, mask)
    p, g = pred[mask], gt[mask]
    if cfg.clamp_pred:
        p = np.clip(p, cfg.min_depth, cfg.max_depth)
    return _from_sums(_sums(p, g))


def aggregate(reports, weights=None) -> MetricsReport:
    """Pool per-image reports as if their pixels had been evaluated together.

    Per-image sums are recovered as ``mean * n`` (``rmse ** 2 * n`` for the
    root metrics), added, and divided by the total count, so the result is
    a pixel-weighted mean rather than a mean of means.  ``weights``
    defaults to each report's ``n_valid``.
    """
    reports = list(reports)
    if not reports:
        raise EmptyList("nothing to aggregate")
    if weights is None:
        weights = [r.n_valid for r in reports]
    weights = [float(w) for w in weights]
    if len(weights) != len(reports):
        raise DimMismatch("one weight per report is required")
    total = sum(weights)
    if total <= 0:
        raise EmptyMask("aggregate weight is zero")

    def pooled(values):
        return sum(w * v for w, v in zip(weights, values)) / total

    return MetricsReport(
        abs_rel=pooled(r.abs_rel for r in reports),
        sq_rel=pooled(r.sq_rel for r in reports),
        rmse=math.sqrt(pooled(r.rmse**2 for r in reports)),
        rmse_log=math.sqrt(pooled(r.rmse_log**2 for r in reports)),
        delta1=pooled(r.delta1 for r in reports),
        delta2=pooled(r.delta2 for r in reports),
        delta3=pooled(r.delta3 for r in reports),
        n_valid=int(round(total)),
    )
