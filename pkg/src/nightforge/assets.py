"""Light-source asset catalog: loading, uniform sampling and augmentation."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from nightforge.errors import DecodeError, EmptyCatalog, InvalidConfig, InvalidDims
from nightforge.imageio import IMAGE_EXTS, PFM_EXTS, read_image


@dataclass(frozen=True)
class LightAsset:
    id: str
    pixels: np.ndarray  # (H, W, 3) float32, linear [0, 1]

    def __post_init__(self):
        px = self.pixels
        if px.ndim != 3 or px.shape[2] != 3 or px.shape[0] < 1 or px.shape[1] < 1:
            raise InvalidDims(f"asset {self.id!r} has shape {px.shape}, want (H, W, 3)")
        if not np.all(np.isfinite(px)) or px.min() < 0.0 or px.max() > 1.0:
            raise ValueError(f"asset {self.id!r} has values outside [0, 1]")


@dataclass(frozen=True)
class AssetCatalog:
    assets: tuple[LightAsset, ...]
    source_dir: str = ""

    def __post_init__(self):
        ids = [a.id for a in self.assets]
        if len(set(ids)) != len(ids):
            raise ValueError("asset ids must be unique")

    def __len__(self):
        return len(self.assets)

    def __getitem__(self, i):
        return self.assets[i]

    @property
    def ids(self) -> list[str]:
        return [a.id for a in self.assets]


@dataclass(frozen=True)
class AugmentConfig:
    p_crop: float = 0.5
    crop_range: tuple[float, float] = (0.7, 1.0)
    p_flip: float = 0.5

    def __post_init__(self):
        lo, hi = self.crop_range
        if not (0.0 < lo <= hi <= 1.0):
            raise InvalidConfig(f"crop_range must satisfy 0 < lo <= hi <= 1, got {self.crop_range}")
        for name in ("p_crop", "p_flip"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise InvalidConfig(f"{name} must lie in [0, 1], got {p}")


NO_AUGMENT = AugmentConfig(p_crop=0.0, p_flip=0.0)


def _to_rgb(img: np.ndarray) -> np.ndarray:
    if img.shape[2] == 1:
        img = np.repeat(img, 3, axis=2)
    return img


def load_catalog(directory) -> AssetCatalog:
    """Load every PNG/PFM file in ``directory`` as a light asset.

    Files are ordered lexicographically by name.  A single undecodable
    image aborts the whole load.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise EmptyCatalog(f"asset directory {directory} does not exist")
    assets = []
    for path in sorted(p for p in directory.iterdir() if p.is_file()):
        ext = path.suffix.lower()
        if ext not in IMAGE_EXTS:
            continue
        img = _to_rgb(read_image(path))
        if ext in PFM_EXTS:
            img = np.nan_to_num(img, nan=0.0, posinf=1.0, neginf=0.0)
            img = np.clip(img, 0.0, 1.0)
        if not np.all(np.isfinite(img)):
            raise DecodeError(path, "non-finite pixel values")
        assets.append(LightAsset(path.name, np.ascontiguousarray(img, dtype=np.float32)))
    if not assets:
        raise EmptyCatalog(f"no decodable images in {directory}")
    return AssetCatalog(tuple(assets), str(directory))


def sample_asset(catalog: AssetCatalog, rng: np.random.Generator) -> LightAsset:
    if len(catalog) == 0:
        raise EmptyCatalog("cannot sample from an empty catalog")
    return catalog[int(rng.integers(len(catalog)))]


def _axis_weights(n_in: int, n_out: int):
    # half-pixel centers, edge-clamped
    src = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    i0 = np.floor(src).astype(np.intp)
    i1 = np.minimum(i0 + 1, n_in - 1)
    t = src - i0
    return i0, i1, t


def bilinear_window(
    img: np.ndarray, size: tuple[int, int], rows: np.ndarray, cols: np.ndarray
) -> np.ndarray:
    """Sample rows ``rows`` and columns ``cols`` of ``img`` bilinearly resized to ``size``.

    Avoids materializing the full resized image when only a window of it
    is needed.
    """
    h_out, w_out = size
    src = np.asarray(img, dtype=np.float64)
    h_in, w_in = src.shape[:2]
    y0, y1, ty = _axis_weights(h_in, h_out)
    x0, x1, tx = _axis_weights(w_in, w_out)
    y0, y1, ty = y0[rows], y1[rows], ty[rows][:, None, None]
    x0, x1, tx = x0[cols], x1[cols], tx[cols][None, :, None]
    top = src[y0][:, x0] * (1 - tx) + src[y0][:, x1] * tx
    bot = src[y1][:, x0] * (1 - tx) + src[y1][:, x1] * tx
    return top * (1 - ty) + bot * ty


def resize_bilinear(img: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    """Bilinear resize of an (H, W, C) array to ``size`` = (H', W')."""
    h_out, w_out = size
    if h_out < 1 or w_out < 1:
        raise InvalidDims(f"target dims must be >= 1, got {size}")
    if tuple(img.shape[:2]) == (h_out, w_out):
        return np.array(img, dtype=np.float32)
    out = bilinear_window(img, size, np.arange(h_out), np.arange(w_out))
    return out.astype(np.float32)


def augment_asset(
    asset: LightAsset,
    target: tuple[int, int],
    rng: np.random.Generator,
    cfg: AugmentConfig = AugmentConfig(),
) -> LightAsset:
    """Resize to ``target``, then optionally crop-and-rescale and flip.

    The generator is advanced by the same amount whatever the
    probabilities are, so disabling a step does not reshuffle later draws.
    """
    h, w = target
    if h < 1 or w < 1:
        raise InvalidDims(f"target dims must be >= 1, got {target}")
    out = resize_bilinear(asset.pixels, (h, w))

    do_crop = rng.random() < cfg.p_crop
    frac = rng.uniform(*cfg.crop_range)
    cy, cx = rng.random(2)
    if do_crop:
        ch = max(1, int(round(frac * h)))
        cw = max(1, int(round(frac * w)))
        y0 = int(cy * (h - ch + 1))
        x0 = int(cx * (w - cw + 1))
        out = resize_bilinear(out[y0:y0 + ch, x0:x0 + cw], (h, w))

    if rng.random() < cfg.p_flip:
        out = out[:, ::-1]

    out = np.clip(out, 0.0, 1.0)
    return LightAsset(asset.id, np.ascontiguousarray(out, dtype=np.float32))
