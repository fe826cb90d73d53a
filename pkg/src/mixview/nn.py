"""Network primitives: convolution, affine maps and softmax family."""

from __future__ import annotations

import numpy as np

from .errors import DimensionError, ParameterError
from .tensor import Tensor, _make, as_tensor, matmul


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1) -> Tensor:
    """Valid 2-D cross-correlation of ``x`` (B,C,H,W) with ``w`` (F,C,k,k)."""
    x, w = as_tensor(x), as_tensor(w)
    if x.ndim != 4 or w.ndim != 4:
        raise DimensionError(f"conv2d expects 4-D input and kernel, got {x.shape}, {w.shape}")
    if stride < 1:
        raise ParameterError(f"stride must be positive, got {stride}")
    B, C, H, W = x.shape
    F, Cw, kh, kw = w.shape
    if Cw != C:
        raise DimensionError(f"kernel has {Cw} input channels, input has {C}")
    if kh > H or kw > W:
        raise DimensionError(f"kernel {kh}x{kw} larger than input {H}x{W}")
    Ho = (H - kh) // stride + 1
    Wo = (W - kw) // stride + 1

    # Work in a batch-last layout: every kernel-tap slice then has the batch as
    # its contiguous innermost axis, and the output handed downstream is a
    # transposed view that the next layer can read back without copying.
    xt = np.ascontiguousarray(x.data.transpose(1, 2, 3, 0))  # C, H, W, B
    cols = np.empty((C, kh, kw, Ho, Wo, B))
    for i in range(kh):
        for j in range(kw):
            cols[:, i, j] = xt[:, i : i + stride * Ho : stride, j : j + stride * Wo : stride]
    cols = cols.reshape(C * kh * kw, Ho * Wo * B)
    wmat = w.data.reshape(F, -1)
    out = wmat @ cols
    if b is not None:
        out += as_tensor(b).data[:, None]
    out = out.reshape(F, Ho, Wo, B).transpose(3, 0, 1, 2)

    parents = (x, w) if b is None else (x, w, as_tensor(b))

    def back(g):
        gt = np.ascontiguousarray(g.transpose(1, 2, 3, 0)).reshape(F, -1)
        gw = (gt @ cols.T).reshape(w.shape) if w.requires_grad else None
        gx = None
        if x.requires_grad:
            dcols = (wmat.T @ gt).reshape(C, kh, kw, Ho, Wo, B)
            gx_t = np.zeros((C, H, W, B))
            for i in range(kh):
                for j in range(kw):
                    gx_t[:, i : i + stride * Ho : stride, j : j + stride * Wo : stride] += dcols[:, i, j]
            gx = gx_t.transpose(3, 0, 1, 2)
        if b is None:
            return gx, gw
        return gx, gw, gt.sum(axis=1)

    return _make(out, parents, back, "conv2d")


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """``x @ w + b`` with ``w`` stored as (in, out)."""
    y = matmul(x, w)
    return y if b is None else y + b


def global_avg_pool(x: Tensor) -> Tensor:
    return as_tensor(x).mean(axis=(2, 3))


def _check_tau(temperature: float) -> float:
    t = float(temperature)
    if not t > 0:
        raise ParameterError(f"temperature must be positive, got {temperature}")
    return t


def softmax(logits: Tensor, temperature: float = 1.0, axis: int = -1) -> Tensor:
    """Max-shifted softmax of ``logits / temperature`` along ``axis``."""
    t = _check_tau(temperature)
    a = as_tensor(logits)
    z = a.data / t
    e = np.exp(z - z.max(axis=axis, keepdims=True))
    out = e / e.sum(axis=axis, keepdims=True)

    def back(g):
        return ((out * (g - (g * out).sum(axis=axis, keepdims=True))) / t,)

    return _make(out, (a,), back, "softmax")


def log_softmax(logits: Tensor, temperature: float = 1.0, axis: int = -1) -> Tensor:
    t = _check_tau(temperature)
    a = as_tensor(logits)
    z = a.data / t
    z = z - z.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out = z - lse
    p = np.exp(out)

    def back(g):
        return ((g - p * g.sum(axis=axis, keepdims=True)) / t,)

    return _make(out, (a,), back, "log_softmax")


def l2_normalize(x: Tensor, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    norm = (x * x).sum(axis=axis, keepdims=True).sqrt()
    return x / norm
