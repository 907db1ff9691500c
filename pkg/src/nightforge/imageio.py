"""PFM and PNG reading/writing.

All readers return float32 arrays shaped (H, W, C).  PNG values are
normalized to [0, 1] (8-bit by 255, 16-bit by 65535); PFM values are
returned as stored.  PFM files are written little-endian (scale -1.0)
with rows bottom-to-top as the format requires.
"""

from __future__ import annotations

import hashlib
import re
from pathlib import Path

import cv2
import numpy as np

from nightforge.errors import DecodeError, InvalidDims

PNG_EXTS = {".png"}
PFM_EXTS = {".pfm"}
IMAGE_EXTS = PNG_EXTS | PFM_EXTS

_PFM_DIMS = re.compile(rb"^\s*(\d+)\s+(\d+)\s*$")


def read_pfm(path) -> np.ndarray:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise DecodeError(path, str(exc)) from exc
    lines = raw.split(b"\n", 3)
    if len(lines) < 4:
        raise DecodeError(path, "truncated PFM header")
    ident, dims, scale_line, payload = lines
    if ident.strip() == b"PF":
        channels = 3
    elif ident.strip() == b"Pf":
        channels = 1
    else:
        raise DecodeError(path, "not a PFM file")
    m = _PFM_DIMS.match(dims)
    if m is None:
        raise DecodeError(path, "bad PFM dimensions")
    width, height = int(m.group(1)), int(m.group(2))
    try:
        scale = float(scale_line)
    except ValueError as exc:
        raise DecodeError(path, "bad PFM scale") from exc
    if scale == 0.0:
        raise DecodeError(path, "bad PFM scale")
    dtype = "<f4" if scale < 0 else ">f4"
    count = width * height * channels
    if len(payload) < 4 * count:
        raise DecodeError(path, "truncated PFM payload")
    data = np.frombuffer(payload, dtype=dtype, count=count)
    data = data.reshape(height, width, channels)[::-1]
    return np.ascontiguousarray(data, dtype=np.float32)


def pfm_bytes(image: np.ndarray) -> bytes:
    arr = np.asarray(image, dtype=np.float32)
    if arr.ndim == 2:
        arr = arr[..., None]
    if arr.ndim != 3 or arr.shape[2] not in (1, 3):
        raise InvalidDims(f"PFM needs 1 or 3 channels, got shape {arr.shape}")
    h, w, c = arr.shape
    header = f"{'PF' if c == 3 else 'Pf'}\n{w} {h}\n-1.0\n".encode("ascii")
    body = np.ascontiguousarray(arr[::-1], dtype="<f4").tobytes()
    return header + body


def write_pfm(path, image: np.ndarray) -> None:
    Path(path).write_bytes(pfm_bytes(image))


def read_png(path) -> np.ndarray:
    """Decode an 8- or 16-bit PNG into RGB float32 in [0, 1].

    Gray images are replicated to three channels and alpha is dropped.
    """
    path = Path(path)
    try:
        buf = np.frombuffer(path.read_bytes(), dtype=np.uint8)
    except OSError as exc:
        raise DecodeError(path, str(exc)) from exc
    img = cv2.imdecode(buf, cv2.IMREAD_UNCHANGED) if buf.size else None
    if img is None:
        raise DecodeError(path, "corrupt or unsupported PNG")
    if img.dtype == np.uint8:
        scale = 255.0
    elif img.dtype == np.uint16:
        scale = 65535.0
    else:
        raise DecodeError(path, f"unsupported sample type {img.dtype}")
    if img.ndim == 2:
        img = np.repeat(img[..., None], 3, axis=2)
    elif img.shape[2] == 4:
        img = cv2.cvtColor(img, cv2.COLOR_BGRA2RGB)
    elif img.shape[2] == 3:
        img = cv2.cvtColor(img, cv2.COLOR_BGR2RGB)
    else:
        raise DecodeError(path, f"unsupported channel count {img.shape[2]}")
    return img.astype(np.float32) / np.float32(scale)


def png16_bytes(image: np.ndarray) -> bytes:
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[..., None]
    if arr.ndim != 3 or arr.shape[2] not in (1, 3):
        raise InvalidDims(f"PNG needs 1 or 3 channels, got shape {arr.shape}")
    q = np.round(np.clip(arr, 0.0, 1.0) * 65535.0).astype(np.uint16)
    if q.shape[2] == 3:
        q = cv2.cvtColor(q, cv2.COLOR_RGB2BGR)
    else:
        q = q[..., 0]
    ok, enc = cv2.imencode(".png", q)
    if not ok:
        raise RuntimeError("PNG encoding failed")
    return enc.tobytes()


def write_png16(path, image: np.ndarray) -> None:
    Path(path).write_bytes(png16_bytes(image))


def write_png8(path, image: np.ndarray) -> None:
    arr = np.asarray(image, dtype=np.float64)
    q = np.round(np.clip(arr, 0.0, 1.0) * 255.0).astype(np.uint8)
    if q.ndim == 3 and q.shape[2] == 3:
        q = cv2.cvtColor(q, cv2.COLOR_RGB2BGR)
    ok, enc = cv2.imencode(".png", q)
    if not ok:
        raise RuntimeError("PNG encoding failed")
    Path(path).write_bytes(enc.tobytes())


def read_image(path) -> np.ndarray:
    """Read a PNG or PFM by extension."""
    ext = Path(path).suffix.lower()
    if ext in PNG_EXTS:
        return read_png(path)
    if ext in PFM_EXTS:
        return read_pfm(path)
    raise DecodeError(path, f"unknown image extension {ext!r}")


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
