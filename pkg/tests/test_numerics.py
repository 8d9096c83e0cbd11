import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from seqloc.numerics import (glorot_bound, init_uniform, log_softmax, logsumexp, make_rng, matmul, relu,
                             relu_grad, sigmoid, sigmoid_grad, softmax, tanh, tanh_grad)

from conftest import central_diff

finite = st.floats(-50, 50, allow_nan=False)


def test_matmul_identity_zero_and_hand_example():
    assert np.array_equal(matmul(np.eye(2), [[3], [4]]), [[3], [4]])
    assert np.array_equal(matmul([[1, 2], [3, 4]], [[0], [0]]), [[0], [0]])
    assert np.array_equal(matmul([[1, 2], [3, 4]], [[5], [6]]), [[17], [39]])


@given(st.integers(1, 5), st.integers(1, 5), st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_matmul_matches_triple_loop(n, k, m, seed):
    r = np.random.default_rng(seed)
    a, b = r.normal(size=(n, k)), r.normal(size=(k, m))
    ref = [[sum(a[i, p] * b[p, j] for p in range(k)) for j in range(m)] for i in range(n)]
    assert np.allclose(matmul(a, b), ref, atol=1e-12)


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(ValueError, match=r"\(2, 3\).*\(2, 2\)"):
        matmul(np.ones((2, 3)), np.ones((2, 2)))


def test_sigmoid_values():
    assert sigmoid(np.array(0.0)) == 0.5
    big = sigmoid(np.array([10.0, 40.0, 800.0]))
    assert np.all(big < 1.0) and big[0] > 0.9999
    assert np.all(sigmoid(np.array([-800.0, -40.0])) > 0.0)
    assert np.all(np.isfinite(sigmoid(np.array([-1e6, 1e6]))))


def test_sigmoid_and_tanh_grads_at_zero_match_finite_differences():
    assert sigmoid_grad(sigmoid(np.array(0.0))) == 0.25
    assert tanh_grad(tanh(np.array(0.0))) == 1.0
    for f, g in ((sigmoid, sigmoid_grad), (tanh, tanh_grad)):
        x = np.linspace(-2, 2, 9)
        num = np.array([central_diff(lambda v: float(f(v)), xi) for xi in x])
        assert np.allclose(g(f(x)), num, rtol=1e-8, atol=1e-10)


@given(arrays(np.float64, st.integers(1, 20), elements=st.floats(-1e4, 1e4)))
def test_activation_ranges(x):
    s = sigmoid(x)
    assert np.all((s > 0) & (s < 1))
    t = tanh(x)
    assert np.all((t > -1) & (t < 1))
    assert np.array_equal(tanh(-x), -t)
    assert np.all(relu(x) >= 0)


def test_tanh_zero_and_relu_grad():
    assert tanh(np.array(0.0)) == 0.0
    assert np.array_equal(relu_grad(relu(np.array([-1.0, 0.0, 2.0]))), [0.0, 0.0, 1.0])


def test_softmax_examples():
    assert np.allclose(softmax(np.zeros(3)), [1 / 3] * 3, atol=1e-15)
    s = softmax(np.array([5.0, 1005.0]))
    assert np.all(np.isfinite(s)) and abs(s.sum() - 1) < 1e-12
    e = np.exp(np.array([1.0, 2.0, 3.0]) - 3.0)
    assert np.allclose(softmax(np.array([1.0, 2.0, 3.0])), e / e.sum(), atol=1e-15)
    with pytest.raises(ValueError):
        softmax(np.array([]))


@given(arrays(np.float64, st.integers(1, 12), elements=st.floats(-700, 700)))
def test_softmax_simplex(x):
    s = softmax(x)
    assert np.all(s > 0) or np.ptp(x) > 700
    assert np.all(s >= 0)
    assert abs(s.sum() - 1.0) < 1e-12
    assert np.allclose(np.exp(log_softmax(x)), s, atol=1e-12)


@given(arrays(np.float64, st.integers(1, 8), elements=st.floats(-20, 20)))
def test_softmax_positive_on_moderate_inputs(x):
    assert np.all(softmax(x) > 0)


@given(arrays(np.float64, st.integers(1, 8), elements=finite))
def test_logsumexp_matches_direct(x):
    assert math.isclose(float(logsumexp(x)), math.log(sum(math.exp(v) for v in x)), rel_tol=1e-12, abs_tol=1e-12)


def test_glorot_bound_and_init():
    assert glorot_bound(3, 3) == 1.0
    w = init_uniform((50, 40), make_rng(3), 40, 50)
    assert np.all(np.abs(w) <= glorot_bound(40, 50))
    assert np.array_equal(w, init_uniform((50, 40), make_rng(3), 40, 50))
    with pytest.raises(ValueError):
        glorot_bound(0, 3)


def test_rng_is_deterministic():
    assert np.array_equal(make_rng(9).normal(size=5), make_rng(9).normal(size=5))
