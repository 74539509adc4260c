import numpy as np
import pytest
from hypothesis import given, strategies as st

from pdecast.errors import NumericError, ShapeError
from pdecast.sparsereg import LassoProblem, fista, lipschitz_constant, soft_threshold


def test_soft_threshold():
    assert soft_threshold(3.0, 1.0) == 2.0
    assert soft_threshold(-0.5, 1.0) == 0.0
    assert soft_threshold(-1.25, 0.0) == -1.25


def test_scalar_problem():
    res = fista(LassoProblem(np.array([[1.0]]), np.array([2.0]), 1.0))
    assert abs(res.coef[0] - 1.5) < 1e-6
    # fine scan of (2 - w)^2 + |w|
    w = np.linspace(-1, 3, 400001)
    assert abs(w[np.argmin((2 - w) ** 2 + np.abs(w))] - 1.5) < 1e-5


def test_ols_with_orthonormal_columns():
    Q, _ = np.linalg.qr(np.random.default_rng(1).normal(size=(20, 3)))
    b = np.random.default_rng(2).normal(size=20)
    assert np.allclose(fista(LassoProblem(Q, b, 0.0, tol=1e-14)).coef, Q.T @ b, atol=1e-6)


def test_kkt_zero():
    rng = np.random.default_rng(3)
    X, b = rng.normal(size=(15, 2)), rng.normal(size=15)
    lam = 2 * np.max(np.abs(X.T @ b)) * 1.01
    res = fista(LassoProblem(X, b, lam))
    assert np.all(res.coef == 0.0)
    g = np.linspace(-1, 1, 201)
    W1, W2 = np.meshgrid(g, g)
    obj = np.sum((b[:, None, None] - X[:, :1, None] * W1 - X[:, 1:, None] * W2) ** 2, axis=0) \
        + lam * (np.abs(W1) + np.abs(W2))
    i, j = np.unravel_index(np.argmin(obj), obj.shape)
    assert W1[i, j] == 0 and W2[i, j] == 0


@given(st.integers(0, 10_000), st.floats(0.01, 5))
def test_objective_properties(seed, lam):
    rng = np.random.default_rng(seed)
    X, b = rng.normal(size=(12, 3)), rng.normal(size=12)
    p = LassoProblem(X, b, lam)
    res = fista(p)
    assert res.objective <= p.objective(np.zeros(3)) + 1e-12
    assert np.all(np.diff(res.history) <= 1e-12)


@given(st.integers(0, 10_000), st.floats(0.1, 10))
def test_homogeneity(seed, alpha):
    rng = np.random.default_rng(seed)
    X, b = rng.normal(size=(10, 3)), rng.normal(size=10)
    w1 = fista(LassoProblem(X, b, 0.5, max_iters=20000, tol=1e-16)).coef
    w2 = fista(LassoProblem(X, alpha * b, 0.5 * alpha, max_iters=20000, tol=1e-16)).coef
    assert np.allclose(w2, alpha * w1, rtol=1e-6, atol=1e-8 * alpha)


def test_lipschitz_estimate():
    X = np.random.default_rng(4).normal(size=(30, 4))
    assert np.isclose(lipschitz_constant(X), 2 * np.linalg.eigvalsh(X.T @ X)[-1], rtol=1e-6)
    assert lipschitz_constant(np.zeros((3, 2))) == 0.0


def test_problem_validation():
    with pytest.raises(ShapeError):
        LassoProblem(np.ones((3, 2)), np.ones(4), 1.0)
    with pytest.raises(Exception):
        LassoProblem(np.ones((3, 2)), np.ones(3), -1.0)
    with pytest.raises(NumericError):
        LassoProblem(np.array([[np.nan]]), np.ones(1), 1.0)
