"""Central finite-difference oracle for reverse-mode gradients."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor


def numerical_grad(
    fn: Callable[..., Tensor], arrays: Sequence[np.ndarray], h: float = 1e-5
) -> list[np.ndarray]:
    """d fn / d arrays[i] by central differences, evaluated without a graph."""
    base = [np.array(a, dtype=np.float64) for a in arrays]
    out = []
    for i, a in enumerate(base):
        g = np.zeros_like(a)
        flat = a.reshape(-1)
        gflat = g.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + h
            fp = fn(*[Tensor(x) for x in base]).item()
            flat[j] = orig - h
            fm = fn(*[Tensor(x) for x in base]).item()
            flat[j] = orig
            gflat[j] = (fp - fm) / (2.0 * h)
        out.append(g)
    return out


def analytic_grad(fn: Callable[..., Tensor], arrays: Sequence[np.ndarray]) -> list[np.ndarray]:
    leaves = [Tensor(np.array(a, dtype=np.float64), requires_grad=True) for a in arrays]
    fn(*leaves).backward()
    return [np.zeros_like(t.data) if t.grad is None else t.grad for t in leaves]


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Max abs difference scaled by the larger gradient's max magnitude."""
    scale = max(np.max(np.abs(analytic)), np.max(np.abs(numeric)), 1e-12)
    return float(np.max(np.abs(analytic - numeric)) / scale)


def check_gradients(
    fn: Callable[..., Tensor], arrays: Sequence[np.ndarray], h: float = 1e-5
) -> float:
    """Worst relative error over all inputs of ``fn``."""
    ana = analytic_grad(fn, arrays)
    num = numerical_grad(fn, arrays, h)
    return max(relative_error(a, n) for a, n in zip(ana, num))
