"""Procedural stand-ins for real data: a daylight RGB-D street scene and glare patterns.

The bundled daylight sample (``daylight_sample``) was rendered once with
:func:`render_daylight_scene` and stored as a 16-bit PNG plus a PFM depth map.
"""

from __future__ import annotations

from importlib import resources

import numpy as np

from nightforge.imageio import read_pfm, read_png

SAMPLE_RGB = "daylight_sample.png"
SAMPLE_DEPTH = "daylight_sample_depth.pfm"


def render_daylight_scene(height: int = 96, width: int = 128, seed: int = 0):
    """Sky, road with ground-plane depth, and a few building blocks.

    Returns ``(rgb, depth)``; sky pixels get depth 0 (invalid).
    """
    rng = np.random.default_rng(seed)
    horizon = int(0.45 * height)
    f = float(max(height, width))
    cam_height = 1.6

    ys = np.arange(height, dtype=np.float64)[:, None]
    xs = np.arange(width, dtype=np.float64)[None, :]
    rgb = np.zeros((height, width, 3))
    depth = np.zeros((height, width))

    t = ys / max(horizon, 1)
    sky = np.stack([0.45 + 0.3 * t, 0.65 + 0.2 * t, 0.95 + 0.0 * t], axis=-1)
    rgb[:horizon] = np.broadcast_to(sky[:horizon], (horizon, width, 3))

    below = ys[horizon:] - horizon + 1.0
    ground_z = np.minimum(f * cam_height / below, 80.0)
    depth[horizon:] = np.broadcast_to(ground_z, (height - horizon, width))
    road = np.abs(xs - width / 2) < (ys - horizon + 1) * 0.9
    grass = np.array([0.35, 0.55, 0.25])
    asphalt = np.array([0.42, 0.42, 0.44])
    rgb[horizon:] = np.where(road[horizon:, :, None], asphalt, grass)

    # buildings: constant depth facades standing on the ground
    for _ in range(4):
        z = rng.uniform(15.0, 45.0)
        foot = horizon + int(round(f * cam_height / z)) - 1
        bh = int(round(f * rng.uniform(6.0, 14.0) / z))
        bw = int(round(f * rng.uniform(5.0, 10.0) / z))
        left = int(rng.integers(0, max(1, width - bw)))
        if rng.random() < 0.5:
            left = min(left, int(width * 0.3))
        else:
            left = max(left, int(width * 0.6))
        top = max(0, foot - bh)
        region = (slice(top, foot + 1), slice(left, left + bw))
        closer = depth[region] == 0
        closer |= depth[region] > z
        color = rng.uniform(0.45, 0.85, size=3)
        rgb[region] = np.where(closer[..., None], color, rgb[region])
        depth[region] = np.where(closer, z, depth[region])

    rgb += rng.normal(0.0, 0.01, size=rgb.shape)
    return np.clip(rgb, 0.0, 1.0).astype(np.float32), depth.astype(np.float32)


def daylight_sample():
    """Load the bundled daylight RGB (H, W, 3) and depth (H, W) arrays."""
    base = resources.files("nightforge") / "data"
    with resources.as_file(base / SAMPLE_RGB) as p:
        rgb = read_png(p)
    with resources.as_file(base / SAMPLE_DEPTH) as p:
        depth = read_pfm(p)[..., 0]
    return rgb, depth


def glare_pattern(size: int = 64, seed: int = 0, rays: int | None = None, core: float = 1.0) -> np.ndarray:
    """A light source on black: saturated core, soft halo and streaks.

    Peak value is ``core`` (clipped to 1).
    """
    rng = np.random.default_rng(seed)
    c = (size - 1) / 2.0
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    dy, dx = yy - c, xx - c
    r = np.hypot(dx, dy)
    sigma = size * rng.uniform(0.03, 0.06)
    intensity = np.exp(-(r**2) / (2 * sigma**2))
    intensity += 0.25 * np.exp(-r / (size * rng.uniform(0.08, 0.15)))
    n_rays = int(rng.integers(3, 7)) if rays is None else rays
    phase = rng.uniform(0, np.pi)
    for k in range(n_rays):
        theta = phase + np.pi * k / max(n_rays, 1)
        perp = np.abs(-np.sin(theta) * dx + np.cos(theta) * dy)
        intensity += 0.3 * np.exp(-perp / 0.8) * np.exp(-r / (0.35 * size))
    intensity /= intensity.max()
    tint = np.array([1.0, rng.uniform(0.8, 1.0), rng.uniform(0.6, 0.95)])
    img = core * intensity[..., None] * tint
    return np.clip(img, 0.0, 1.0).astype(np.float32)
