"""Illumination guidance and multiscale feature fusion, forward and backward.

Arrays are channels-last, (H, W, C).  The forward pass is

    x       = concat(night, mean_c(night))
    E_k     = conv_kxk(x) + b_k                 k in (1, 3, 5), zero "same" padding
    logit_k = E_k @ W_k + c_k                   pointwise C3 -> C3
    alpha_k = softmax over k of logit_k         per (h, w, channel)
    E_fused = sum_k alpha_k * E_k
    out     = E_fused @ P + p                   1x1 projection C3 -> C1

The softmax runs across the three scales at every position and channel so
that the fused feature is a convex combination of the branch features.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from nightforge.errors import DimMismatch, InvalidDims, TapeMismatch, WrongChannelCount

KERNEL_SIZES = (1, 3, 5)
PARAMS_MAGIC = b"NFFUSE1\n"


def illumination_guidance(night: np.ndarray) -> np.ndarray:
    night = np.asarray(night)
    if night.ndim != 3 or night.shape[2] != 3:
        raise WrongChannelCount(f"expected (H, W, 3), got {night.shape}")
    return night.mean(axis=2, keepdims=True)


def concat_aux(night: np.ndarray, guidance: np.ndarray) -> np.ndarray:
    night, guidance = np.asarray(night), np.asarray(guidance)
    if night.ndim != 3 or guidance.ndim != 3 or night.shape[:2] != guidance.shape[:2]:
        raise DimMismatch(f"cannot concatenate {night.shape} with {guidance.shape}")
    return np.concatenate([night, guidance], axis=2)


@dataclass
class FusionParams:
    """Learnable weights.  Conv kernels are (k, k, C_in, C3); matrices act on the right."""

    k1: np.ndarray
    b1: np.ndarray
    k3: np.ndarray
    b3: np.ndarray
    k5: np.ndarray
    b5: np.ndarray
    w1: np.ndarray
    c1: np.ndarray
    w2: np.ndarray
    c2: np.ndarray
    w3: np.ndarray
    c3: np.ndarray
    proj: np.ndarray
    proj_b: np.ndarray

    def __post_init__(self):
        c_in, c3 = self.k1.shape[2], self.k1.shape[3]
        c1 = self.proj.shape[1]
        want = self.shapes(c_in, c3, c1)
        for name, shape in want.items():
            got = getattr(self, name).shape
            if got != shape:
                raise InvalidDims(f"{name} has shape {got}, want {shape}")

    @staticmethod
    def shapes(c_in: int, c3: int, c1: int) -> dict[str, tuple[int, ...]]:
        return {
            "k1": (1, 1, c_in, c3),
            "b1": (c3,),
            "k3": (3, 3, c_in, c3),
            "b3": (c3,),
            "k5": (5, 5, c_in, c3),
            "b5": (c3,),
            "w1": (c3, c3),
            "c1": (c3,),
            "w2": (c3, c3),
            "c2": (c3,),
            "w3": (c3, c3),
            "c3": (c3,),
            "proj": (c3, c1),
            "proj_b": (c1,),
        }

    @property
    def dims(self) -> tuple[int, int, int]:
        """(C_in, C3, C1)."""
        return self.k1.shape[2], self.k1.shape[3], self.proj.shape[1]

    @property
    def kernels(self):
        return [(self.k1, self.b1), (self.k3, self.b3), (self.k5, self.b5)]

    @property
    def attention(self):
        return [(self.w1, self.c1), (self.w2, self.c2), (self.w3, self.c3)]

    def items(self):
        for f in fields(self):
            yield f.name, getattr(self, f.name)

    def map(self, fn) -> "FusionParams":
        return FusionParams(**{name: fn(arr) for name, arr in self.items()})

    def astype(self, dtype) -> "FusionParams":
        return self.map(lambda a: np.asarray(a, dtype=dtype))

    @classmethod
    def zeros(cls, c_in: int, c3: int, c1: int, dtype=np.float64) -> "FusionParams":
        return cls(**{n: np.zeros(s, dtype) for n, s in cls.shapes(c_in, c3, c1).items()})

    @classmethod
    def init(cls, c_in: int, c3: int, c1: int, seed: int = 0, scale: float = 0.1) -> "FusionParams":
        """Weights ~ U(-scale, scale) drawn in field order from one seeded generator; biases zero."""
        rng = np.random.default_rng(seed)
        arrays = {}
        for name, shape in cls.shapes(c_in, c3, c1).items():
            if len(shape) == 1:
                arrays[name] = np.zeros(shape)
            else:
                arrays[name] = rng.uniform(-scale, scale, size=shape)
        return cls(**arrays)


@dataclass
class FusionTape:
    x: np.ndarray
    params: FusionParams
    branches: np.ndarray  # (3, H, W, C3)
    logits: np.ndarray  # (3, H, W, C3)
    alpha: np.ndarray  # (3, H, W, C3)
    fused: np.ndarray  # (H, W, C3)


def conv2d_same(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Cross-correlation with zero padding so the output keeps H x W."""
    k = kernel.shape[0]
    pad = k // 2
    h, w = x.shape[:2]
    xp = np.pad(x, ((pad, pad), (pad, pad), (0, 0)))
    out = np.zeros((h, w, kernel.shape[3]), dtype=np.result_type(x, kernel))
    for dy in range(k):
        for dx in range(k):
            out += xp[dy:dy + h, dx:dx + w] @ kernel[dy, dx]
    return out + bias


def _conv2d_same_backward(x, kernel, grad_out):
    k = kernel.shape[0]
    pad = k // 2
    h, w = x.shape[:2]
    xp = np.pad(x, ((pad, pad), (pad, pad), (0, 0)))
    grad_xp = np.zeros_like(xp, dtype=np.result_type(x, grad_out))
    grad_k = np.zeros_like(kernel, dtype=np.result_type(kernel, grad_out))
    g2 = grad_out.reshape(-1, grad_out.shape[2])
    for dy in range(k):
        for dx in range(k):
            window = xp[dy:dy + h, dx:dx + w]
            grad_k[dy, dx] = window.reshape(-1, window.shape[2]).T @ g2
            grad_xp[dy:dy + h, dx:dx + w] += grad_out @ kernel[dy, dx].T
    grad_x = grad_xp[pad:pad + h, pad:pad + w]
    return grad_x, grad_k, grad_out.sum(axis=(0, 1))


def softmax_scales(logits: np.ndarray) -> np.ndarray:
    """Softmax along axis 0 (the scale axis)."""
    z = logits - logits.max(axis=0, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=0, keepdims=True)


def fusion_forward(x: np.ndarray, params: FusionParams):
    """Return (output (H, W, C1), tape)."""
    x = np.asarray(x)
    c_in, _, _ = params.dims
    if x.ndim != 3 or x.shape[2] != c_in:
        raise DimMismatch(f"input shape {x.shape} does not match C_in={c_in}")
    branches = np.stack([conv2d_same(x, k, b) for k, b in params.kernels])
    logits = np.stack([e @ w + c for e, (w, c) in zip(branches, params.attention)])
    alpha = softmax_scales(logits)
    fused = (alpha * branches).sum(axis=0)
    out = fused @ params.proj + params.proj_b
    return out, FusionTape(x, params, branches, logits, alpha, fused)


def fusion_backward(tape: FusionTape, grad_out: np.ndarray):
    """Adjoint of :func:`fusion_forward`: returns (grad_x, grad_params)."""
    grad_out = np.asarray(grad_out)
    p = tape.params
    h, w = tape.x.shape[:2]
    c1 = p.dims[2]
    if grad_out.shape != (h, w, c1):
        raise TapeMismatch(f"grad_out shape {grad_out.shape} does not match output {(h, w, c1)}")

    g2 = grad_out.reshape(-1, c1)
    grad_proj = tape.fused.reshape(-1, tape.fused.shape[2]).T @ g2
    grad_proj_b = g2.sum(axis=0)
    grad_fused = grad_out @ p.proj.T

    alpha, branches = tape.alpha, tape.branches
    grad_alpha = grad_fused[None] * branches
    grad_branches = grad_fused[None] * alpha
    # softmax Jacobian across the scale axis
    grad_logits = alpha * (grad_alpha - (alpha * grad_alpha).sum(axis=0, keepdims=True))

    att_grads = []
    for i, (wi, _) in enumerate(p.attention):
        gl = grad_logits[i]
        e = branches[i]
        att_grads.append((
            e.reshape(-1, e.shape[2]).T @ gl.reshape(-1, gl.shape[2]),
            gl.sum(axis=(0, 1)),
        ))
        grad_branches[i] += gl @ wi.T

    grad_x = np.zeros_like(tape.x, dtype=np.result_type(tape.x, grad_out))
    conv_grads = []
    for i, (k, _) in enumerate(p.kernels):
        gx, gk, gb = _conv2d_same_backward(tape.x, k, grad_branches[i])
        grad_x += gx
        conv_grads.append((gk, gb))

    grads = FusionParams(
        k1=conv_grads[0][0], b1=conv_grads[0][1],
        k3=conv_grads[1][0], b3=conv_grads[1][1],
        k5=conv_grads[2][0], b5=conv_grads[2][1],
        w1=att_grads[0][0], c1=att_grads[0][1],
        w2=att_grads[1][0], c2=att_grads[1][1],
        w3=att_grads[2][0], c3=att_grads[2][1],
        proj=grad_proj, proj_b=grad_proj_b,
    )
    return grad_x, grads


@dataclass
class GradCheckReport:
    max_rel_error: float
    tol: float
    errors: dict[str, float]

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tol

    @property
    def worst(self) -> str:
        return max(self.errors, key=self.errors.get)


def rel_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> float:
    """Max over entries of |a - n| / max(|a|, |n|, floor)."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    if a.size == 0:
        return 0.0
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom))


def _numeric_grad(f, arr: np.ndarray, step: float) -> np.ndarray:
    grad = np.zeros_like(arr)
    flat = arr.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + step
        fp = f()
        flat[i] = old - step
        fm = f()
        flat[i] = old
        gflat[i] = (fp - fm) / (2 * step)
    return grad


def grad_check(
    params: FusionParams,
    x: np.ndarray,
    tol: float = 1e-5,
    step: float = 1e-4,
    weights: np.ndarray | None = None,
) -> GradCheckReport:
    """Compare analytic and central-difference gradients in float64.

    The scalar loss is ``sum(weights * output)`` (``weights`` all ones by
    default).  Passes iff the worst relative error is strictly below ``tol``.
    """
    params = params.astype(np.float64).map(np.array)
    x = np.array(x, dtype=np.float64)
    if max(x.shape[:2]) > 16:
        raise InvalidDims("grad_check is meant for inputs of at most 16x16")
    out, tape = fusion_forward(x, params)
    if weights is None:
        weights = np.ones_like(out)
    grad_x, grads = fusion_backward(tape, weights)

    def loss():
        return float(np.sum(weights * fusion_forward(x, params)[0]))

    errors = {"x": rel_error(grad_x, _numeric_grad(loss, x, step))}
    for name, arr in params.items():
        errors[name] = rel_error(getattr(grads, name), _numeric_grad(loss, arr, step))
    return GradCheckReport(max(errors.values()), tol, errors)


# Parameter file layout:
#   b"NFFUSE1\n"
#   one line of UTF-8 JSON: {"c_in", "c3", "c1", "dtype": "<f8",
#                            "arrays": [[name, shape], ...]}
#   the arrays' raw little-endian float64 bytes, C order, in the listed order.


def params_bytes(params: FusionParams) -> bytes:
    c_in, c3, c1 = params.dims
    header = {
        "c_in": c_in,
        "c3": c3,
        "c1": c1,
        "dtype": "<f8",
        "arrays": [[name, list(arr.shape)] for name, arr in params.items()],
    }
    buf = io.BytesIO()
    buf.write(PARAMS_MAGIC)
    buf.write(json.dumps(header, separators=(",", ":")).encode() + b"\n")
    for _, arr in params.items():
        buf.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return buf.getvalue()


def save_params(path, params: FusionParams) -> None:
    Path(path).write_bytes(params_bytes(params))


def load_params(path) -> FusionParams:
    raw = Path(path).read_bytes()
    if not raw.startswith(PARAMS_MAGIC):
        raise ValueError(f"{path} is not a fusion parameter file")
    rest = raw[len(PARAMS_MAGIC):]
    line, _, payload = rest.partition(b"\n")
    header = json.loads(line)
    if header.get("dtype") != "<f8":
        raise ValueError(f"unsupported dtype {header.get('dtype')!r}")
    arrays, offset = {}, 0
    for name, shape in header["arrays"]:
        count = int(np.prod(shape)) if shape else 1
        nbytes = 8 * count
        if offset + nbytes > len(payload):
            raise ValueError(f"{path} is truncated")
        arrays[name] = np.frombuffer(payload, "<f8", count, offset).reshape(shape).copy()
        offset += nbytes
    if offset != len(payload):
        raise ValueError(f"{path} has trailing bytes")
    return FusionParams(**arrays)
