import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mixview import ContractError, DimensionError, NumericalError, ParameterError, Tensor, no_grad
from mixview.gradcheck import check_gradients, relative_error
from mixview.nn import conv2d, global_avg_pool, l2_normalize, linear, log_softmax, softmax
from mixview.tensor import (
    checked,
    clip_min,
    concat,
    exp,
    log,
    logsumexp,
    matmul,
    relu,
    reshape,
    sqrt,
    stack,
    take,
    transpose,
)

TOL = 1e-4


# --------------------------------------------------------------------------- matmul
def test_matmul_examples():
    a = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal(matmul(a, np.ones((2, 1))).data, [[3.0], [7.0]])
    assert np.array_equal(matmul(np.eye(2), a).data, a)
    assert np.array_equal(matmul(a, np.zeros((2, 3))).data, np.zeros((2, 3)))


def test_matmul_shape_mismatch():
    with pytest.raises(DimensionError):
        matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_matmul_associative(rng):
    for _ in range(20):
        a, b, c = rng.normal(size=(3, 4)), rng.normal(size=(4, 5)), rng.normal(size=(5, 2))
        left = matmul(matmul(a, b), c).data
        right = matmul(a, matmul(b, c)).data
        assert np.max(np.abs(left - right)) <= 1e-9 * np.max(np.abs(left))


# --------------------------------------------------------------------------- conv2d
def test_conv_identity_kernel(rng):
    x = rng.normal(size=(2, 1, 5, 5))
    assert np.allclose(conv2d(x, np.ones((1, 1, 1, 1))).data, x)


def test_conv_one_by_one_sums_channels(rng):
    x = rng.normal(size=(1, 3, 4, 4))
    assert np.allclose(conv2d(x, np.ones((1, 3, 1, 1))).data[:, 0], x.sum(axis=1))


def test_conv_examples():
    assert np.array_equal(conv2d(np.ones((1, 1, 3, 3)), np.ones((1, 1, 2, 2))).data, np.full((1, 1, 2, 2), 4.0))
    assert not conv2d(np.ones((1, 2, 4, 4)), np.zeros((3, 2, 3, 3))).data.any()


@pytest.mark.parametrize("h,k,s", [(7, 3, 2), (8, 3, 2), (5, 2, 1), (9, 4, 3), (3, 3, 1)])
def test_conv_output_extent(h, k, s):
    out = conv2d(np.zeros((1, 1, h, h)), np.zeros((2, 1, k, k)), stride=s)
    assert out.shape == (1, 2, (h - k) // s + 1, (h - k) // s + 1)


def test_conv_errors():
    with pytest.raises(DimensionError):
        conv2d(np.ones((1, 1, 2, 2)), np.ones((1, 1, 3, 3)))
    with pytest.raises(DimensionError):
        conv2d(np.ones((1, 2, 4, 4)), np.ones((1, 3, 3, 3)))
    with pytest.raises(ParameterError):
        conv2d(np.ones((1, 1, 4, 4)), np.ones((1, 1, 3, 3)), stride=0)


def test_conv_matches_direct_loop(rng):
    x, w, b = rng.normal(size=(2, 3, 7, 6)), rng.normal(size=(4, 3, 3, 3)), rng.normal(size=4)
    out = conv2d(x, w, b, stride=2).data
    ref = np.zeros_like(out)
    for i in range(out.shape[2]):
        for j in range(out.shape[3]):
            patch = x[:, :, 2 * i : 2 * i + 3, 2 * j : 2 * j + 3]
            ref[:, :, i, j] = np.einsum("bchw,fchw->bf", patch, w) + b
    assert np.allclose(out, ref, atol=1e-12)


# --------------------------------------------------------------------------- softmax
def test_softmax_examples():
    assert np.allclose(softmax(np.zeros((2, 5)), 0.3).data, 0.2)
    assert np.allclose(softmax(np.array([np.log(2.0), 0.0])).data, [2 / 3, 1 / 3], atol=1e-15)
    assert softmax(np.array([1.0, 0.0]), 0.1).data[0] > 0.9999


def test_softmax_rows_and_shift(rng):
    z = rng.normal(size=(6, 7)) * 30
    p = softmax(z, 0.5).data
    assert np.max(np.abs(p.sum(axis=1) - 1)) < 1e-9
    assert np.allclose(softmax(z + 123.4, 0.5).data, p, atol=1e-12)


@pytest.mark.parametrize("tau", [0.0, -1.0])
def test_softmax_bad_temperature(tau):
    with pytest.raises(ParameterError):
        softmax(np.zeros(3), tau)
    with pytest.raises(ParameterError):
        log_softmax(np.zeros(3), tau)


def test_log_softmax_consistent(rng):
    z = rng.normal(size=(3, 4))
    assert np.allclose(np.exp(log_softmax(z, 0.7).data), softmax(z, 0.7).data)


# --------------------------------------------------------------------------- backward
def test_backward_examples(rng):
    p = Tensor(rng.normal(size=(3, 2)), requires_grad=True)
    p.sum().backward()
    assert np.array_equal(p.grad, np.ones((3, 2)))
    q = Tensor(rng.normal(size=4), requires_grad=True)
    (q * q).sum().backward()
    assert np.allclose(q.grad, 2 * q.data)


def test_backward_non_scalar():
    p = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ContractError):
        (p * 2).backward()


def test_backward_accumulates_on_leaves():
    p = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    (p * 3).sum().backward()
    (p * 3).sum().backward()
    assert np.array_equal(p.grad, [6.0, 6.0])
    p.zero_grad()
    assert p.grad is None


def test_shared_subexpression():
    p = Tensor(np.array([2.0]), requires_grad=True)
    y = p * p
    (y + y * p).sum().backward()  # d/dp (p^2 + p^3) = 2p + 3p^2
    assert np.allclose(p.grad, [16.0])


def test_no_grad_records_nothing():
    p = Tensor(np.ones(2), requires_grad=True)
    with no_grad():
        y = (p * 2).sum()
    assert not y.requires_grad
    with pytest.raises(ContractError):
        y.backward()


def test_checked_mode_catches_nan():
    with checked(True), np.errstate(invalid="ignore"):
        with pytest.raises(NumericalError):
            log(Tensor(np.array([-1.0])))
    with checked(False), np.errstate(invalid="ignore"):
        assert np.isnan(log(Tensor(np.array([-1.0]))).data[0])


# --------------------------------------------------------------------------- gradient oracle
UNARY = {
    "exp": lambda a: exp(a).sum(),
    "log": lambda a: log(a * a + 1.0).sum(),
    "sqrt": lambda a: sqrt(a * a + 0.5).sum(),
    "relu": lambda a: (relu(a) * a).sum(),
    "clip_min": lambda a: (clip_min(a, -0.3) ** 2).sum(),
    "power": lambda a: ((a * a + 1.0) ** 1.5).sum(),
    "div": lambda a: (1.0 / (a * a + 1.0)).sum(),
    "logsumexp": lambda a: (logsumexp(a, axis=-1) ** 2).sum(),
    "mean": lambda a: (a.mean(axis=0) ** 2).sum(),
    "reshape": lambda a: (reshape(a, (-1,)) * np.arange(a.size)).sum(),
    "transpose": lambda a: (transpose(a) @ a).sum(),
    "take": lambda a: (take(a, (np.array([0, 0, 1]),)) ** 2).sum(),
    "softmax": lambda a: (softmax(a, 0.7) * np.arange(a.shape[-1])).sum(),
    "log_softmax": lambda a: (log_softmax(a, 1.3) ** 2).sum(),
    "l2_normalize": lambda a: (l2_normalize(a) * np.arange(a.shape[-1])).sum(),
    "stack": lambda a: (stack([a, a * a]) ** 2).sum(),
    "concat": lambda a: (concat([a, a * 2], axis=1) ** 3).sum(),
}


@pytest.mark.parametrize("name", sorted(UNARY))
def test_unary_gradients(name, rng):
    fn = UNARY[name]
    for _ in range(100):
        shape = tuple(int(s) for s in rng.integers(2, 6, size=2))
        x = rng.normal(size=shape)
        if name == "relu" or name == "clip_min":
            x = x + np.sign(x) * 0.05  # keep away from the kink
        assert check_gradients(fn, [x]) < TOL


BINARY = {
    "add": lambda a, b: ((a + b) ** 2).sum(),
    "sub": lambda a, b: ((a - b) ** 2).sum(),
    "mul": lambda a, b: (a * b * a).sum(),
    "div": lambda a, b: (a / (b * b + 1.0)).sum(),
    "matmul": lambda a, b: ((a @ b.T) ** 2).sum(),
    "linear": lambda a, b: (linear(a, b.T, b[:, 0]) ** 2).sum(),
}


@pytest.mark.parametrize("name", sorted(BINARY))
def test_binary_gradients(name, rng):
    fn = BINARY[name]
    for _ in range(100):
        r, c = (int(s) for s in rng.integers(2, 6, size=2))
        assert check_gradients(fn, [rng.normal(size=(r, c)), rng.normal(size=(r, c))]) < TOL


def test_broadcast_gradients(rng):
    fn = lambda a, b: ((a * b + b) ** 2).sum()  # noqa: E731
    for _ in range(100):
        n, d = (int(s) for s in rng.integers(2, 6, size=2))
        assert check_gradients(fn, [rng.normal(size=(n, d)), rng.normal(size=(1, d))]) < TOL


def test_conv_gradients(rng):
    for _ in range(100):
        b, c, f = (int(s) for s in rng.integers(1, 4, size=3))
        k = int(rng.integers(1, 4))
        s = int(rng.integers(1, 3))
        h = int(rng.integers(k, 6))
        x, w, bias = rng.normal(size=(b, c, h, h)), rng.normal(size=(f, c, k, k)), rng.normal(size=f)
        assert check_gradients(lambda x, w, bias: (conv2d(x, w, bias, s) ** 2).sum(), [x, w, bias]) < TOL


def test_pool_gradient(rng):
    x = rng.normal(size=(2, 3, 4, 4))
    assert check_gradients(lambda x: (global_avg_pool(x) ** 2).sum(), [x]) < TOL


def test_relative_error_definition():
    assert relative_error(np.array([1.0, 2.0]), np.array([1.0, 2.0])) == 0.0
    assert relative_error(np.array([1.0, 2.0]), np.array([1.0, 1.0])) == pytest.approx(0.5)
    assert relative_error(np.zeros(2), np.zeros(2)) == 0.0


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=2, max_size=6), st.floats(0.05, 5.0))
def test_softmax_property(logits, tau):
    p = softmax(np.array(logits), tau).data
    assert abs(p.sum() - 1.0) < 1e-9
    assert np.all(p >= 0)
