"""Learnable 1-D convolution stencils and their moment characterisation.

A filter ``q`` of odd length ``N`` with taps indexed ``g = -(N-1)/2 .. (N-1)/2``
has moments ``v_i = sum_g g^i q[g] / i!``. Applied to samples of a smooth
``f`` with spacing ``h`` it returns ``sum_i v_i h^i f^(i) + O(h^N)``, so pinning
``v_j = 0`` for ``j < d`` and ``v_d = 1`` makes it a ``d``-th derivative
estimator (times ``h^d``). The remaining moments stay free for training.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np

from .errors import InternalError, ShapeError, UnsupportedOrder

DENOM_EPS = 1e-8


def offsets(n: int) -> np.ndarray:
    half = (n - 1) // 2
    return np.arange(-half, half + 1, dtype=float)


def moment_matrix(n: int) -> np.ndarray:
    """Row ``i`` maps filter taps to moment ``v_i``."""
    g = offsets(n)
    return np.array([g**i / factorial(i) for i in range(n)])


@dataclass(frozen=True, eq=False)
class ConvKernel:
    weights: np.ndarray
    derivative_order: int | None = None

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.ndim != 1 or len(w) < 3 or len(w) % 2 == 0:
            raise ShapeError(f"kernel needs an odd length >= 3, got {w.shape}")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        d = self.derivative_order
        if d is not None:
            if not 0 <= d < len(w):
                raise UnsupportedOrder(f"order {d} outside [0, {len(w) - 1}]")
            v = moment_vector(self)
            target = np.zeros(d + 1)
            target[d] = 1.0
            if np.max(np.abs(v[: d + 1] - target)) > 1e-9:
                raise ShapeError(f"weights violate the order-{d} moment constraint: {v[: d + 1]}")

    @property
    def size(self) -> int:
        return len(self.weights)

    @classmethod
    def for_order(cls, order: int, size: int = 5) -> "ConvKernel":
        """Minimum-norm stencil of the given derivative order."""
        return constrain_kernel(np.zeros(size), order)


def moment_vector(kernel) -> np.ndarray:
    q = kernel.weights if isinstance(kernel, ConvKernel) else np.asarray(kernel, dtype=float)
    return moment_matrix(len(q)) @ q


def constrain_kernel(kernel, order: int) -> ConvKernel:
    """Project onto ``{v_j = 0 (j < order), v_order = 1}`` with the smallest weight change."""
    q = kernel.weights if isinstance(kernel, ConvKernel) else np.asarray(kernel, dtype=float)
    n = len(q)
    if not 0 <= order < n:
        raise UnsupportedOrder(f"order {order} outside [0, {n - 1}]")
    A = moment_matrix(n)[: order + 1]
    target = np.zeros(order + 1)
    target[order] = 1.0
    gram = A @ A.T
    if np.linalg.cond(gram) > 1e12:
        raise InternalError("singular moment system")
    resid = target - A @ q
    q_new = q + A.T @ np.linalg.solve(gram, resid)
    # keep exact copies of already-feasible kernels
    if np.max(np.abs(resid)) <= 1e-14:
        q_new = q.copy()
    return ConvKernel(q_new, order)


def free_basis(n: int, order: int) -> np.ndarray:
    """Orthonormal columns spanning the tap directions that keep moments ``0..order`` fixed."""
    A = moment_matrix(n)[: order + 1]
    _, _, vt = np.linalg.svd(A)
    return vt[order + 1:].T


def convolve(kernel, window) -> float:
    q = kernel.weights if isinstance(kernel, ConvKernel) else np.asarray(kernel, dtype=float)
    w = np.asarray(window, dtype=float)
    if w.shape != q.shape:
        raise ShapeError(f"window length {w.shape} does not match kernel length {q.shape}")
    return float(np.dot(q, w))


def convolve_series(kernel, values) -> np.ndarray:
    """Correlate along a whole series; entry ``i`` uses the window ending at ``i + N - 1``."""
    q = kernel.weights if isinstance(kernel, ConvKernel) else np.asarray(kernel, dtype=float)
    v = np.asarray(values, dtype=float)
    if len(v) < len(q):
        return np.zeros(0)
    return np.lib.stride_tricks.sliding_window_view(v, len(q)) @ q


def ratio_estimate(kernel, numerator, denominator, eps: float = DENOM_EPS):
    """Elementwise ``(K*num)/(K*den)`` with small denominators zeroed and flagged."""
    num = convolve_series(kernel, numerator)
    den = convolve_series(kernel, denominator)
    bad = np.abs(den) < eps
    out = np.divide(num, den, out=np.zeros_like(num), where=~bad)
    return out, bad


def fd_oracle(values, coords, order: int) -> np.ndarray:
    """Classical central-difference derivative on interior points (length ``n - 2``).

    Works for non-uniform ``coords``; independent of any kernel machinery.
    """
    f = np.asarray(values, dtype=float)
    x = np.asarray(coords, dtype=float)
    if order not in (1, 2):
        raise UnsupportedOrder(f"oracle supports orders 1 and 2, got {order}")
    if len(f) != len(x) or len(x) < 3:
        raise ShapeError("oracle needs matching arrays of length >= 3")
    dx = np.diff(x)
    if not (np.all(dx > 0) or np.all(dx < 0)):
        raise ShapeError("coords must be strictly monotone")
    h0, h1 = x[1:-1] - x[:-2], x[2:] - x[1:-1]
    f0, f1, f2 = f[:-2], f[1:-1], f[2:]
    if order == 1:
        return (h0**2 * f2 + (h1**2 - h0**2) * f1 - h1**2 * f0) / (h0 * h1 * (h0 + h1))
    return 2.0 * (h0 * f2 - (h0 + h1) * f1 + h1 * f0) / (h0 * h1 * (h0 + h1))
