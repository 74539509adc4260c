import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from pdecast.diffop import (ConvKernel, constrain_kernel, convolve, convolve_series, fd_oracle, free_basis,
                            moment_vector, ratio_estimate)
from pdecast.errors import ShapeError, UnsupportedOrder

taps = st.sampled_from([3, 5, 7]).flatmap(
    lambda n: arrays(float, n, elements=st.floats(-3, 3, allow_nan=False)))


@pytest.mark.parametrize("q,v", [([-0.5, 0, 0.5], [0, 1, 0]), ([1, -2, 1], [0, 0, 1]), ([0, 1, 0], [1, 0, 0])])
def test_moment_vector_examples(q, v):
    assert np.allclose(moment_vector(q), v)


def test_constrain_by_hand():
    # v0 = -0.4 + 0.6 = 0.2 and v1 = 0.4 + 0.6 = 1.0; the min-norm fix subtracts 0.2/3 from each tap
    k = constrain_kernel([-0.4, 0.0, 0.6], 1)
    assert np.allclose(k.weights, [-0.4 - 0.2 / 3, -0.2 / 3, 0.6 - 0.2 / 3])
    assert np.allclose(moment_vector(k)[:2], [0, 1])


def test_constrain_unique_second_order():
    assert np.allclose(constrain_kernel([5.0, 1.0, -7.0], 2).weights, [1, -2, 1])


def test_constrain_keeps_feasible_kernel():
    q = np.array([-0.5, 0.0, 0.5])
    assert np.array_equal(constrain_kernel(q, 1).weights, q)


@given(taps, st.integers(0, 2))
def test_constrain_idempotent(q, order):
    once = constrain_kernel(q, order)
    assert np.allclose(constrain_kernel(once, order).weights, once.weights, atol=1e-12)
    v = moment_vector(once)
    assert np.allclose(v[:order + 1], np.eye(order + 1)[order], atol=1e-9)


@given(taps, taps, st.floats(-2, 2), st.floats(-2, 2))
def test_moment_vector_linear(q1, q2, a, b):
    if len(q1) != len(q2):
        return
    assert np.allclose(moment_vector(a * q1 + b * q2), a * moment_vector(q1) + b * moment_vector(q2))


@given(st.sampled_from([3, 5, 7, 9]), st.integers(0, 2))
def test_free_basis_keeps_pinned_moments(n, order):
    B = free_basis(n, order)
    assert B.shape == (n, n - order - 1)
    assert np.allclose(moment_vector(B.T[0])[:order + 1] if B.size else 0, 0)
    assert np.allclose(B.T @ B, np.eye(B.shape[1]))


def test_kernel_validation():
    with pytest.raises(ShapeError):
        ConvKernel([1.0, 2.0])
    with pytest.raises(ShapeError):
        ConvKernel([0.0, 1.0, 0.0], derivative_order=1)
    with pytest.raises(UnsupportedOrder):
        constrain_kernel([0.0, 1.0, 0.0], 3)
    assert ConvKernel([-0.5, 0.0, 0.5], 1).size == 3


def test_convolve_examples():
    assert np.isclose(convolve([-0.5, 0, 0.5], [0.81, 1.0, 1.21]), 0.2)
    assert convolve([0, 1, 0], [4.0, 7.0, 9.0]) == 7.0
    assert convolve(np.zeros(3), [4.0, 7.0, 9.0]) == 0.0
    with pytest.raises(ShapeError):
        convolve([0, 1, 0], [1.0, 2.0])


def test_convolve_series_matches_pointwise():
    v = np.random.default_rng(0).normal(size=12)
    q = [0.1, -0.3, 0.5, 0.2, -0.1]
    full = convolve_series(q, v)
    assert np.allclose(full, [convolve(q, v[i:i + 5]) for i in range(8)])


def test_ratio_guard():
    out, bad = ratio_estimate([-0.5, 0, 0.5], [1.0, 2.0, 3.0, 4.0], [1.0, 1.0, 1.0, 2.0])
    assert bad.tolist() == [True, False]
    assert out.tolist() == [0.0, 2.0]


def test_oracle_square_and_constant():
    x = np.linspace(0, 1, 11)
    assert np.allclose(fd_oracle(x**2, x, 1), 2 * x[1:-1])
    assert np.allclose(fd_oracle(np.full(11, 2.0), x, 2), 0)
    with pytest.raises(UnsupportedOrder):
        fd_oracle(x, x, 3)


def test_oracle_sine_second_order_accuracy():
    errs = []
    for n in (51, 101):
        x = np.linspace(0, 2, n)
        errs.append(np.max(np.abs(fd_oracle(np.sin(x), x, 1) - np.cos(x[1:-1]))))
    assert errs[0] < 1e-3 and 3.5 < errs[0] / errs[1] < 4.5


def test_ratio_estimator_matches_oracle():
    # dy/dx along a curve parametrised by s: (K*y)/(K*x) vs the chain rule from the oracle
    s = np.linspace(0.1, 1.0, 200)
    x, y = np.sin(s), np.cos(s)
    est, _ = ratio_estimate([-0.5, 0, 0.5], y, x)
    ref = fd_oracle(y, s, 1) / fd_oracle(x, s, 1)
    assert np.allclose(est, ref, rtol=1e-12)
