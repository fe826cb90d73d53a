"""Finite-difference gradient suite over every training objective."""

from __future__ import annotations

import numpy as np

from .gradcheck import check_gradients
from .objectives import DinoHead, barlow_loss, dino_loss, mixsr_loss, supervised_ce

LOSSES = ("mixsr_loss", "barlow_loss", "dino_loss", "supervised_ce")


def _trial(name: str, rng: np.random.Generator, h: float) -> float:
    n = int(rng.integers(2, 5))
    d = int(rng.integers(2, 7))
    if name == "mixsr_loss":
        tau = float(rng.uniform(0.2, 1.0))
        canonical = bool(rng.integers(2))
        return check_gradients(lambda a, b: mixsr_loss(a, b, tau, canonical), [rng.normal(size=(n, d)) for _ in range(2)], h)
    if name == "barlow_loss":
        std = bool(rng.integers(2))
        if std:
            n = max(n, 3)  # two centred rows make every correlation +-1: a constant loss
        return check_gradients(lambda a, b: barlow_loss(a, b, 0.005, std), [rng.normal(size=(n, d)) for _ in range(2)], h)
    if name == "dino_loss":
        n_views = int(rng.integers(2, 5))
        n_glob = int(rng.integers(1, n_views + 1))
        teacher = [rng.normal(size=(n, d)) for _ in range(n_glob)]
        center = rng.normal(size=d) * 0.1

        def fn(*students):
            # tau_s keeps log-probabilities above the floor, where the loss has a kink
            head = DinoHead(d, 0.5, 0.1, center=center.copy())
            return dino_loss(teacher, list(students), head, update_center=False)

        return check_gradients(fn, [rng.normal(size=(n, d)) for _ in range(n_views)], h)
    if name == "supervised_ce":
        k = int(rng.integers(2, 6))
        labels = rng.integers(0, k, size=n)
        return check_gradients(lambda z: supervised_ce(z, labels), [rng.normal(size=(n, k))], h)
    raise KeyError(name)


def loss_gradient_suite(trials: int = 50, seed: int = 0, h: float = 1e-5) -> dict[str, float]:
    """Worst analytic-vs-central-difference relative error per loss over random small batches."""
    rng = np.random.default_rng(seed)
    return {name: max(_trial(name, rng, h) for _ in range(trials)) for name in LOSSES}
