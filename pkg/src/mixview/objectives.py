"""Training objectives over real/synthetic embedding pairs.

All losses take :class:`~mixview.tensor.Tensor` inputs and return a scalar
tensor that can be differentiated with ``.backward()``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DegenerateInputError, DimensionError, ParameterError
from .nn import log_softmax, softmax
from .tensor import Tensor, as_tensor, clip_min, concat, logsumexp, no_grad

PROB_FLOOR = 1e-12
_MASKED = -1e9


def cosine_sim(u, v) -> float:
    u = np.asarray(u.data if isinstance(u, Tensor) else u, dtype=np.float64)
    v = np.asarray(v.data if isinstance(v, Tensor) else v, dtype=np.float64)
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise DegenerateInputError("cosine similarity of a zero vector")
    return float(np.clip(u @ v / (nu * nv), -1.0, 1.0))


def _row_normalize(z: Tensor) -> Tensor:
    sq = (z * z).sum(axis=1, keepdims=True)
    if np.any(sq.data == 0.0):
        raise DegenerateInputError("zero embedding row")
    return z / sq.sqrt()


def _check_pair(z: Tensor, zt: Tensor) -> None:
    if z.ndim != 2 or z.shape != zt.shape:
        raise DimensionError(f"embedding batches must be equal-shape matrices, got {z.shape} and {zt.shape}")


def mixsr_loss(z, z_tilde, tau: float = 0.5, canonical: bool = False) -> Tensor:
    """Contrastive loss between real embeddings ``z`` and counterparts ``z_tilde``.

    Every one of the 2N embeddings serves as an anchor whose positive is its
    partner from the other branch. By default the denominator sums over the
    2N - 2 embeddings that are neither the anchor nor its partner;
    ``canonical=True`` keeps the partner in the denominator (NT-Xent).
    """
    z, zt = as_tensor(z), as_tensor(z_tilde)
    _check_pair(z, zt)
    n = z.shape[0]
    if n < 2:
        raise ContractError("mixsr_loss needs at least two pairs")
    if not tau > 0:
        raise ParameterError(f"temperature must be positive, got {tau}")
    p = _row_normalize(concat([z, zt], axis=0))
    sim = (p @ p.T) * (1.0 / tau)
    idx = np.arange(2 * n)
    partner = np.concatenate([idx[n:], idx[:n]])
    excluded = np.eye(2 * n, dtype=bool)
    if not canonical:
        excluded[idx, partner] = True
    denom = logsumexp(sim + np.where(excluded, _MASKED, 0.0), axis=1)
    pos = sim[idx, partner]
    return (denom - pos).mean()


def cross_correlation(z, z_tilde, standardize: bool = False) -> Tensor:
    """Column-normalised cross-correlation matrix between two embedding batches."""
    z, zt = as_tensor(z), as_tensor(z_tilde)
    _check_pair(z, zt)
    if standardize:
        z = z - z.mean(axis=0, keepdims=True)
        zt = zt - zt.mean(axis=0, keepdims=True)
    na = (z * z).sum(axis=0)
    nb = (zt * zt).sum(axis=0)
    if np.any(na.data == 0.0) or np.any(nb.data == 0.0):
        raise DegenerateInputError("all-zero embedding column")
    num = z.T @ zt
    den = na.sqrt().reshape(-1, 1) * nb.sqrt().reshape(1, -1)
    return num / den


def barlow_loss(z, z_tilde, lam: float = 0.005, standardize: bool = False) -> Tensor:
    if lam < 0:
        raise ParameterError(f"lambda must be non-negative, got {lam}")
    c = cross_correlation(z, z_tilde, standardize)
    eye = np.eye(c.shape[0])
    on_diag = (1.0 - (c * eye).sum(axis=1)) ** 2
    off = (c * (1.0 - eye)) ** 2
    return on_diag.sum() + lam * off.sum()


# --------------------------------------------------------------------------- distillation
@dataclass
class DinoHead:
    """Temperatures and the running teacher centre."""

    out_dim: int = 64
    tau_s: float = 0.1
    tau_t: float = 0.04
    center_momentum: float = 0.9
    centering: bool = True
    center: np.ndarray = field(default=None)

    def __post_init__(self):
        if not (self.tau_s > 0 and self.tau_t > 0):
            raise ParameterError("DINO temperatures must be positive")
        if self.center is None:
            self.center = np.zeros(self.out_dim)

    def update_center(self, teacher_logits) -> None:
        if not self.centering:
            return
        arr = np.concatenate([np.asarray(t.data if isinstance(t, Tensor) else t) for t in teacher_logits])
        m = self.center_momentum
        self.center = m * self.center + (1.0 - m) * arr.mean(axis=0)


def dino_distribution(logits, tau: float, center=None) -> np.ndarray:
    """Softmax of ``(logits - center) / tau``; no centre means zero centre."""
    x = np.asarray(logits.data if isinstance(logits, Tensor) else logits, dtype=np.float64)
    if center is not None:
        x = x - np.asarray(center)
    with no_grad():
        return softmax(Tensor(x), tau).data


def dino_term_count(n_global: int, n_views: int) -> int:
    return n_global * (n_views - 1)


def dino_loss(teacher_logits, student_logits, head: DinoHead, update_center: bool = True) -> Tensor:
    """Cross-entropy distillation from teacher global views to all other student views.

    ``teacher_logits[t]`` is the teacher output for student view ``t``; the
    teacher views are therefore the first ``len(teacher_logits)`` entries of
    ``student_logits``. Teacher outputs are treated as constants.
    """
    if len(student_logits) < 2:
        raise ContractError("dino_loss needs at least two student views")
    if not 1 <= len(teacher_logits) <= len(student_logits):
        raise ContractError("teacher views must be a non-empty subset of the student views")
    center = head.center if head.centering else None
    targets = [
        dino_distribution(t.data if isinstance(t, Tensor) else t, head.tau_t, center) for t in teacher_logits
    ]
    logps = [clip_min(log_softmax(as_tensor(s), head.tau_s), np.log(PROB_FLOOR)) for s in student_logits]
    total = None
    n_terms = 0
    for ti, pt in enumerate(targets):
        for si, lp in enumerate(logps):
            if si == ti:
                continue
            term = -(lp * pt).sum(axis=-1).mean()
            total = term if total is None else total + term
            n_terms += 1
    loss = total * (1.0 / n_terms)
    if update_center:
        head.update_center(teacher_logits)
    return loss


def supervised_ce(logits, labels) -> Tensor:
    logits = as_tensor(logits)
    labels = np.asarray(labels, dtype=np.int64)
    n, k = logits.shape
    if labels.shape != (n,):
        raise DimensionError("one label per row required")
    if labels.min() < 0 or labels.max() >= k:
        raise ParameterError(f"labels must lie in [0, {k})")
    lp = log_softmax(logits)
    return -lp[np.arange(n), labels].mean()
