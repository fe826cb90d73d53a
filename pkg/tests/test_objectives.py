import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mixview import ContractError, DegenerateInputError, DimensionError, ParameterError, Tensor
from mixview.gradcheck import check_gradients
from mixview.objectives import (
    DinoHead,
    barlow_loss,
    cosine_sim,
    cross_correlation,
    dino_distribution,
    dino_loss,
    dino_term_count,
    mixsr_loss,
    supervised_ce,
)
from mixview.views import CropMix


def _mixsr_oracle(z, zt, tau, canonical=False):
    """Direct per-anchor evaluation of the contrastive formula."""
    pool = np.concatenate([z, zt])
    pool = pool / np.linalg.norm(pool, axis=1, keepdims=True)
    n = len(z)
    total = 0.0
    for a in range(2 * n):
        partner = (a + n) % (2 * n)
        excluded = {a} if canonical else {a, partner}
        denom = sum(math.exp(pool[a] @ pool[j] / tau) for j in range(2 * n) if j not in excluded)
        total += -(pool[a] @ pool[partner] / tau - math.log(denom))
    return total / (2 * n)


# --------------------------------------------------------------------------- cosine
def test_cosine_examples():
    u = np.array([1.0, 0.0])
    assert cosine_sim(u, u) == 1.0
    assert cosine_sim(u, np.array([0.0, 3.0])) == 0.0
    assert cosine_sim(u, np.array([1.0, 1.0])) == pytest.approx(1 / math.sqrt(2), abs=1e-12)
    with pytest.raises(DegenerateInputError):
        cosine_sim(u, np.zeros(2))


# --------------------------------------------------------------------------- mixsr
def test_mixsr_orthonormal_pairs():
    z = np.eye(2)
    assert mixsr_loss(z, z, 1.0).item() == pytest.approx(-1.0 + math.log(2.0), abs=1e-9)


def test_mixsr_all_orthogonal():
    e = np.eye(4)
    assert mixsr_loss(e[:2], e[2:], 1.0).item() == pytest.approx(math.log(2.0), abs=1e-9)


def test_mixsr_needs_two_pairs():
    with pytest.raises(ContractError):
        mixsr_loss(np.ones((1, 3)), np.ones((1, 3)))


def test_mixsr_zero_row_and_shapes():
    z = np.ones((3, 2))
    zt = z.copy()
    zt[1] = 0
    with pytest.raises(DegenerateInputError):
        mixsr_loss(z, zt)
    with pytest.raises(DimensionError):
        mixsr_loss(np.ones((3, 2)), np.ones((3, 4)))
    with pytest.raises(ParameterError):
        mixsr_loss(np.eye(2), np.eye(2), 0.0)


@pytest.mark.parametrize("canonical", [False, True])
def test_mixsr_matches_oracle(rng, canonical):
    for _ in range(20):
        n, d = int(rng.integers(2, 6)), int(rng.integers(2, 7))
        z, zt = rng.normal(size=(n, d)), rng.normal(size=(n, d))
        tau = float(rng.uniform(0.1, 1.0))
        assert mixsr_loss(z, zt, tau, canonical).item() == pytest.approx(_mixsr_oracle(z, zt, tau, canonical), rel=1e-10)


def test_mixsr_scale_invariance(rng):
    z, zt = rng.normal(size=(4, 5)), rng.normal(size=(4, 5))
    assert mixsr_loss(z * 7.3, zt * 7.3).item() == pytest.approx(mixsr_loss(z, zt).item(), rel=1e-12)


def test_canonical_differs_by_positive_term(rng):
    z, zt = rng.normal(size=(3, 4)), rng.normal(size=(3, 4))
    assert mixsr_loss(z, zt, 0.5, True).item() > mixsr_loss(z, zt, 0.5, False).item()


# --------------------------------------------------------------------------- barlow
def test_cross_correlation_examples():
    z = np.array([[1.0, 1.0], [1.0, -1.0]])
    assert np.allclose(cross_correlation(z, z).data, np.eye(2))
    assert cross_correlation(np.array([[1.0], [1.0]]), np.array([[1.0], [-1.0]])).data[0, 0] == 0.0
    assert cross_correlation(np.array([[2.0], [0.0]]), np.array([[1.0], [0.0]])).data[0, 0] == 1.0


def test_cross_correlation_zero_column():
    with pytest.raises(DegenerateInputError):
        cross_correlation(np.array([[1.0, 0.0], [2.0, 0.0]]), np.ones((2, 2)))


def test_barlow_examples(rng):
    z = np.array([[1.0, 1.0], [-1.0, -1.0]])
    assert barlow_loss(z, z, 0.005).item() == pytest.approx(0.01, abs=1e-12)
    q = np.array([[1.0, 1.0], [1.0, -1.0]])
    assert barlow_loss(q, q).item() == pytest.approx(0.0, abs=1e-15)
    a, b = rng.normal(size=(5, 3)), rng.normal(size=(5, 3))
    c = cross_correlation(a, b).data
    assert barlow_loss(a, b, 0.0).item() == pytest.approx(((1 - np.diag(c)) ** 2).sum(), rel=1e-12)
    with pytest.raises(ParameterError):
        barlow_loss(a, b, -1.0)


def test_barlow_standardize_is_mean_invariant(rng):
    a, b = rng.normal(size=(6, 3)), rng.normal(size=(6, 3))
    assert barlow_loss(a + 5.0, b - 2.0, standardize=True).item() == pytest.approx(
        barlow_loss(a, b, standardize=True).item(), rel=1e-10
    )


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, (5, 3), elements=st.floats(-10, 10)), arrays(np.float64, (5, 3), elements=st.floats(-10, 10)))
def test_cross_correlation_bounded(a, b):
    if np.any(np.abs(a).sum(axis=0) < 1e-3) or np.any(np.abs(b).sum(axis=0) < 1e-3):
        return
    c = cross_correlation(a, b).data
    assert np.all(np.abs(c) <= 1.0 + 1e-12)


# --------------------------------------------------------------------------- dino
def test_dino_distribution_examples():
    assert np.allclose(dino_distribution(np.full(4, 3.0), 0.2), 0.25)
    logits = np.array([0.3, -1.0, 2.0])
    assert np.allclose(dino_distribution(logits, 0.5, center=logits), 1 / 3)
    e = math.e
    assert np.allclose(dino_distribution(np.array([1.0, 0.0]), 1.0), [e / (e + 1), 1 / (e + 1)], atol=1e-15)
    with pytest.raises(ParameterError):
        dino_distribution(np.zeros(2), 0.0)


def test_dino_loss_examples():
    head = DinoHead(2, tau_s=1.0, tau_t=1e-3, centering=False)
    # teacher logits strongly favour class 0, so its distribution is (1, 0)
    teacher = [np.array([[1.0, 0.0]])]
    student = [np.array([[5.0, 5.0]]), np.array([[0.0, 0.0]])]
    assert dino_loss(teacher, student, head).item() == pytest.approx(math.log(2.0), abs=1e-12)
    head4 = DinoHead(4, tau_s=1.0, tau_t=1.0, centering=False)
    u = np.zeros((1, 4))
    assert dino_loss([u], [u, u], head4).item() == pytest.approx(math.log(4.0), abs=1e-12)


def test_dino_term_count():
    mix = CropMix(6, 1, 2, 1)
    assert mix.total == 10 and mix.n_global == 2
    assert dino_term_count(mix.n_global, mix.total) == 18


def test_dino_shift_invariance(rng):
    head = DinoHead(5, centering=False)
    teacher = [rng.normal(size=(3, 5)) for _ in range(2)]
    student = [rng.normal(size=(3, 5)) for _ in range(4)]
    base = dino_loss(teacher, student, head).item()
    shifted = list(student)
    shifted[2] = shifted[2] + 4.2
    assert dino_loss(teacher, shifted, head).item() == pytest.approx(base, rel=1e-12)


def test_dino_teacher_detached(rng):
    head = DinoHead(3)
    t = Tensor(rng.normal(size=(2, 3)), requires_grad=True)
    s = [Tensor(rng.normal(size=(2, 3)), requires_grad=True) for _ in range(2)]
    dino_loss([t], s, head).backward()
    assert t.grad is None
    # view 0 is the teacher's own view and takes part in no term
    assert s[0].grad is None and s[1].grad is not None


def test_dino_center_update():
    head = DinoHead(2, center_momentum=0.9)
    teacher = [np.array([[1.0, 3.0], [3.0, 5.0]])]
    dino_loss(teacher, [np.zeros((2, 2))] * 2, head)
    assert np.allclose(head.center, 0.1 * np.array([2.0, 4.0]))
    off = DinoHead(2, centering=False)
    dino_loss(teacher, [np.zeros((2, 2))] * 2, off)
    assert not off.center.any()


def test_dino_contracts():
    head = DinoHead(2)
    with pytest.raises(ContractError):
        dino_loss([np.zeros((1, 2))], [np.zeros((1, 2))], head)
    with pytest.raises(ContractError):
        dino_loss([], [np.zeros((1, 2))] * 2, head)
    with pytest.raises(ParameterError):
        DinoHead(2, tau_s=0.0)


def test_dino_log_floor():
    head = DinoHead(2, tau_s=1e-3, tau_t=1.0, centering=False)
    # student puts essentially zero mass on class 1; the floor keeps the loss finite
    loss = dino_loss([np.array([[0.0, 0.0]])], [np.zeros((1, 2)), np.array([[100.0, 0.0]])], head).item()
    assert math.isfinite(loss)
    assert loss == pytest.approx(0.5 * -math.log(1e-12), rel=1e-9)


# --------------------------------------------------------------------------- supervised
def test_supervised_examples():
    assert supervised_ce(np.zeros((3, 10)), [0, 4, 9]).item() == pytest.approx(math.log(10.0), abs=1e-12)
    big = np.array([[100.0, 0.0], [0.0, 100.0]])
    assert supervised_ce(big, [0, 1]).item() < 1e-30
    assert supervised_ce(big, [1, 0]).item() > math.log(2.0)
    with pytest.raises(ParameterError):
        supervised_ce(np.zeros((2, 3)), [0, 3])
    with pytest.raises(DimensionError):
        supervised_ce(np.zeros((2, 3)), [0])


# --------------------------------------------------------------------------- gradients
def test_gradients_small_temperature(rng):
    z, zt = rng.normal(size=(4, 6)), rng.normal(size=(4, 6))
    assert check_gradients(lambda a, b: mixsr_loss(a, b, 0.1), [z, zt]) < 1e-4
    assert check_gradients(lambda a, b: barlow_loss(a, b, 0.005, True), [z, zt]) < 1e-4
