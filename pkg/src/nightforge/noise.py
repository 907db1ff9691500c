"""Physically decoupled sensor noise on a linear [0, 1] image.

    I_FN = clamp(I_F + K*N_p + N_read + N_row + N_quant, 0, 1)

Shot noise is simulated as ``K * Poisson(I_F / K)`` so that its variance
is ``K * I_F`` in normalized units.  Components are applied in the order
shot -> read -> row -> quant, each from its own generator spawned from
``NoiseModel.seed``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from nightforge.errors import InvalidConfig, NegativeSignal

ORIENTATIONS = ("row", "column")


@dataclass(frozen=True)
class NoiseModel:
    """Noise parameters for one frame, all in normalized digital units.

    ``k == 0`` is the noiseless limit of the shot term.
    """

    k: float
    sigma_read: float
    lambda_row: float
    lambda_quant: float
    seed: int

    def __post_init__(self):
        if self.k < 0 or self.sigma_read < 0 or self.lambda_row < 0 or self.lambda_quant < 0:
            raise InvalidConfig(f"noise parameters must be non-negative: {self}")

    @property
    def variance(self) -> float:
        """Signal-independent part of the total variance."""
        return self.sigma_read**2 + self.lambda_row + self.lambda_quant**2 / 12.0


@dataclass(frozen=True)
class NoiseModelRanges:
    # ln(sigma_read) = read_slope * ln(K) + read_intercept + N(0, read_scatter^2)
    k_range: tuple[float, float] = (0.01, 0.2)
    read_slope: float = 0.85
    read_intercept: float = -1.6
    read_scatter: float = 0.25
    row_range: tuple[float, float] = (1e-6, 4e-4)
    quant_range: tuple[float, float] = (1 / 255, 1 / 255)
    shot: bool = True
    read: bool = True
    row: bool = True
    quant: bool = True

    def __post_init__(self):
        lo, hi = self.k_range
        if not (0 < lo <= hi):
            raise InvalidConfig(f"k_range must satisfy 0 < min <= max, got {self.k_range}")
        for name in ("row_range", "quant_range"):
            lo, hi = getattr(self, name)
            if not (0 <= lo <= hi):
                raise InvalidConfig(f"{name} must satisfy 0 <= min <= max, got {(lo, hi)}")
        if self.read_scatter < 0:
            raise InvalidConfig("read_scatter must be non-negative")
        if not all(math.isfinite(x) for x in (self.read_slope, self.read_intercept)):
            raise InvalidConfig("read calibration must be finite")

    @classmethod
    def disabled(cls) -> "NoiseModelRanges":
        return cls(shot=False, read=False, row=False, quant=False)


def sample_noise_model(ranges: NoiseModelRanges, rng: np.random.Generator) -> NoiseModel:
    if not isinstance(ranges, NoiseModelRanges):
        raise InvalidConfig("expected NoiseModelRanges")
    k_lo, k_hi = ranges.k_range
    ln_k = rng.uniform(math.log(k_lo), math.log(k_hi))
    if k_lo == k_hi:
        ln_k = math.log(k_lo)
    k = k_lo if k_lo == k_hi else math.exp(ln_k)

    z = rng.standard_normal()
    sigma_read = math.exp(ranges.read_slope * ln_k + ranges.read_intercept + ranges.read_scatter * z)
    lambda_row = rng.uniform(*ranges.row_range)
    lambda_quant = rng.uniform(*ranges.quant_range)
    if ranges.row_range[0] == ranges.row_range[1]:
        lambda_row = ranges.row_range[0]
    if ranges.quant_range[0] == ranges.quant_range[1]:
        lambda_quant = ranges.quant_range[0]
    seed = int(rng.integers(0, 2**63))
    return NoiseModel(
        k=float(k) if ranges.shot else 0.0,
        sigma_read=float(sigma_read) if ranges.read else 0.0,
        lambda_row=float(lambda_row) if ranges.row else 0.0,
        lambda_quant=float(lambda_quant) if ranges.quant else 0.0,
        seed=seed,
    )


def _out_dtype(signal: np.ndarray):
    return signal.dtype if np.issubdtype(signal.dtype, np.floating) else np.float64


def apply_shot_noise(signal: np.ndarray, k: float, rng: np.random.Generator) -> np.ndarray:
    signal = np.asarray(signal)
    if np.any(signal < 0) or np.any(np.isnan(signal)):
        raise NegativeSignal("shot noise needs a non-negative signal")
    if k < 0:
        raise InvalidConfig(f"gain must be non-negative, got {k}")
    if k == 0:
        return signal.astype(_out_dtype(signal), copy=True)
    counts = rng.poisson(signal.astype(np.float64) / k)
    return (k * counts).astype(_out_dtype(signal))


def apply_read_noise(signal: np.ndarray, sigma_read: float, rng: np.random.Generator) -> np.ndarray:
    signal = np.asarray(signal)
    if sigma_read < 0:
        raise InvalidConfig(f"sigma_read must be non-negative, got {sigma_read}")
    if sigma_read == 0:
        return signal.astype(_out_dtype(signal), copy=True)
    noise = rng.normal(0.0, sigma_read, size=signal.shape)
    return (signal + noise).astype(_out_dtype(signal))


def apply_row_noise(
    signal: np.ndarray, lambda_row: float, rng: np.random.Generator, orientation: str = "row"
) -> np.ndarray:
    """Add one N(0, lambda_row) offset per row (or per column), shared by all channels."""
    signal = np.asarray(signal)
    if lambda_row < 0:
        raise InvalidConfig(f"lambda_row must be non-negative, got {lambda_row}")
    if orientation not in ORIENTATIONS:
        raise InvalidConfig(f"orientation must be one of {ORIENTATIONS}, got {orientation!r}")
    dtype = _out_dtype(signal)
    if lambda_row == 0:
        return signal.astype(dtype, copy=True)
    if orientation == "row":
        offsets = rng.normal(0.0, math.sqrt(lambda_row), size=signal.shape[0]).astype(dtype)
        offsets = offsets.reshape((-1,) + (1,) * (signal.ndim - 1))
    else:
        offsets = rng.normal(0.0, math.sqrt(lambda_row), size=signal.shape[1]).astype(dtype)
        offsets = offsets.reshape((1, -1) + (1,) * (signal.ndim - 2))
    return signal.astype(dtype) + offsets


def apply_quant_noise(signal: np.ndarray, lambda_quant: float, rng: np.random.Generator) -> np.ndarray:
    signal = np.asarray(signal)
    if lambda_quant < 0:
        raise InvalidConfig(f"lambda_quant must be non-negative, got {lambda_quant}")
    if lambda_quant == 0:
        return signal.astype(_out_dtype(signal), copy=True)
    half = lambda_quant / 2.0
    noise = rng.uniform(-half, half, size=signal.shape)
    return (signal + noise).astype(_out_dtype(signal))


def noise_generators(seed: int) -> list[np.random.Generator]:
    """One independent generator per component, in application order."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(4)]


def apply_noise(
    flare_image: np.ndarray, model: NoiseModel, orientation: str = "row", clamp: bool = True
) -> np.ndarray:
    """Full noise stack; ``clamp=False`` exposes the pre-clamp image for statistics."""
    shot_rng, read_rng, row_rng, quant_rng = noise_generators(model.seed)
    out = apply_shot_noise(flare_image, model.k, shot_rng)
    out = apply_read_noise(out, model.sigma_read, read_rng)
    out = apply_row_noise(out, model.lambda_row, row_rng, orientation)
    out = apply_quant_noise(out, model.lambda_quant, quant_rng)
    if clamp:
        out = np.clip(out, 0.0, 1.0, out=out)
    return out
