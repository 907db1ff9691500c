"""Flare simulation: light placement, intensity sampling and gamma-domain compositing.

The composed flare image is

    I_F = (s_b * I) ** g_F + sum_i ss(L_S, s_F, P_i) ** g_F

clamped to [0, 1], where ``ss`` scales the sampled light-source pattern
by ``s_F`` in intensity and by ``z_ref / z`` in size, then centers it at
the source's pixel position.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from nightforge.assets import LightAsset, bilinear_window
from nightforge.errors import DepthOutOfRange, DimMismatch, InvalidConfig, InvalidDims

Z_MAX = 20.0  # meters; farther sources are not placed
Z_REF = 5.0  # meters; distance at which a pattern keeps its size


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise InvalidConfig(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")

    @classmethod
    def default_for(cls, height: int, width: int) -> "CameraIntrinsics":
        # roughly 53 degree field of view across the longer side
        f = float(max(height, width))
        return cls(f, f, width / 2.0, height / 2.0)

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    def project(self, p3d) -> tuple[float, float]:
        x, y, z = p3d
        return self.fx * x / z + self.cx, self.fy * y / z + self.cy


@dataclass(frozen=True)
class LightPlacement:
    u: float
    v: float
    z: float
    p3d: tuple[float, float, float]


@dataclass(frozen=True)
class FlareDraw:
    s_b: float
    g_f: float
    f_total: float
    s_f: float
    n_f: int

    def __post_init__(self):
        if self.s_f <= 0 or self.f_total <= 0:
            raise InvalidConfig("s_f and f_total must be positive")
        if self.n_f != num_sources(self.f_total, self.s_f):
            raise InvalidConfig(
                f"n_f={self.n_f} inconsistent with F={self.f_total}, s_F={self.s_f}"
            )


@dataclass(frozen=True)
class FlareConfig:
    s_f_range: tuple[float, float] = (0.5, 4.0)
    f_range: tuple[float, float] = (1.0, 12.0)
    s_b_range: tuple[float, float] = (0.4, 1.0)
    g_f_range: tuple[float, float] = (1.8, 2.2)
    z_max: float = Z_MAX
    z_min: float = 1.0
    z_ref: float = Z_REF
    depth_attenuation: bool = False

    def __post_init__(self):
        for name in ("s_f_range", "f_range", "s_b_range", "g_f_range"):
            lo, hi = getattr(self, name)
            if not (0 < lo <= hi):
                raise InvalidConfig(f"{name} must satisfy 0 < min <= max, got {(lo, hi)}")
        if not (0 < self.z_min <= self.z_max):
            raise InvalidConfig(f"need 0 < z_min <= z_max, got {self.z_min}, {self.z_max}")
        if self.z_ref <= 0:
            raise InvalidConfig("z_ref must be positive")

    def check(self, draw: FlareDraw) -> None:
        """Raise if ``draw`` falls outside this config's ranges."""
        pairs = [
            ("s_b", draw.s_b, self.s_b_range),
            ("g_f", draw.g_f, self.g_f_range),
            ("s_f", draw.s_f, self.s_f_range),
            ("f_total", draw.f_total, self.f_range),
        ]
        for name, value, (lo, hi) in pairs:
            if not lo <= value <= hi:
                raise InvalidConfig(f"{name}={value} outside [{lo}, {hi}]")


def num_sources(f_total: float, s_f: float) -> int:
    return max(int(math.floor(f_total / s_f + 0.5)), 1)


def place_light(intr: CameraIntrinsics, uv, z: float, z_max: float = Z_MAX) -> LightPlacement:
    """Back-project pixel ``uv`` at depth ``z`` through the camera intrinsics."""
    if not (0.0 < z <= z_max):
        raise DepthOutOfRange(f"light depth {z} m outside (0, {z_max}]")
    u, v = float(uv[0]), float(uv[1])
    x = z * (u - intr.cx) / intr.fx
    y = z * (v - intr.cy) / intr.fy
    return LightPlacement(u, v, float(z), (x, y, float(z)))


def _log_uniform(rng: np.random.Generator, lo: float, hi: float) -> float:
    x = rng.uniform(math.log(lo), math.log(hi))
    return lo if lo == hi else float(math.exp(x))


def _uniform(rng: np.random.Generator, lo: float, hi: float) -> float:
    x = rng.uniform(lo, hi)
    return lo if lo == hi else float(x)


def sample_flare_draw(cfg: FlareConfig, rng: np.random.Generator) -> FlareDraw:
    if not isinstance(cfg, FlareConfig):
        raise InvalidConfig("expected a FlareConfig")
    s_f = _log_uniform(rng, *cfg.s_f_range)
    f_total = _log_uniform(rng, *cfg.f_range)
    s_b = _uniform(rng, *cfg.s_b_range)
    g_f = _uniform(rng, *cfg.g_f_range)
    return FlareDraw(s_b, g_f, f_total, s_f, num_sources(f_total, s_f))


def sample_placement(
    intr: CameraIntrinsics, dims: tuple[int, int], cfg: FlareConfig, rng: np.random.Generator
) -> LightPlacement:
    """Uniform pixel position over the frame, depth uniform on (z_min, z_max]."""
    h, w = dims
    u = rng.uniform(0.0, w)
    v = rng.uniform(0.0, h)
    z = cfg.z_max - rng.uniform(0.0, cfg.z_max - cfg.z_min)
    return place_light(intr, (u, v), z, cfg.z_max)


def render_source(
    asset: LightAsset,
    placement: LightPlacement,
    s_f: float,
    dims: tuple[int, int],
    z_ref: float = Z_REF,
    attenuate: bool = False,
) -> np.ndarray:
    """Contribution plane of one light source, (H, W, 3) float32.

    The pattern is resized by ``z_ref / z``, multiplied by ``s_f`` (and by
    ``(z_ref / z) ** 2`` when ``attenuate``), and its center pixel is put
    at the rounded (u, v).  Parts falling outside the frame are dropped.
    """
    h, w = dims
    if h < 1 or w < 1:
        raise InvalidDims(f"frame dims must be >= 1, got {dims}")
    ha, wa = asset.pixels.shape[:2]
    if ha > h or wa > w:
        raise InvalidDims(f"asset {ha}x{wa} larger than frame {h}x{w}")

    out = np.zeros((h, w, 3), dtype=np.float32)
    scale = z_ref / placement.z
    hs = max(1, int(math.floor(ha * scale + 0.5)))
    ws = max(1, int(math.floor(wa * scale + 0.5)))
    top = int(math.floor(placement.v + 0.5)) - hs // 2
    left = int(math.floor(placement.u + 0.5)) - ws // 2

    r0, r1 = max(top, 0), min(top + hs, h)
    c0, c1 = max(left, 0), min(left + ws, w)
    if r0 >= r1 or c0 >= c1:
        return out
    rows = np.arange(r0, r1) - top
    cols = np.arange(c0, c1) - left
    if (hs, ws) == (ha, wa):
        patch = asset.pixels[rows][:, cols].astype(np.float64)
    else:
        patch = bilinear_window(asset.pixels, (hs, ws), rows, cols)
    gain = s_f * (scale * scale if attenuate else 1.0)
    out[r0:r1, c0:c1] = patch * gain
    return out


def compose_flare(image: np.ndarray, contributions, draw: FlareDraw) -> np.ndarray:
    """Gamma-domain composite of the darkened image and every source contribution.

    ``contributions`` may be any iterable (a generator keeps memory flat);
    it must yield exactly ``draw.n_f`` planes shaped like ``image``.
    """
    image = np.asarray(image)
    g = draw.g_f
    out = np.power(draw.s_b * image.astype(np.float64), g)
    count = 0
    for c in contributions:
        c = np.asarray(c, dtype=np.float64)
        if c.shape != image.shape:
            raise DimMismatch(f"contribution shape {c.shape} != image shape {image.shape}")
        out += np.power(np.maximum(c, 0.0), g)
        count += 1
    if count != draw.n_f:
        raise DimMismatch(f"expected {draw.n_f} contributions, got {count}")
    return np.clip(out, 0.0, 1.0).astype(np.float32)
