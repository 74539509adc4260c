"""L1-regularised least squares, ``min_W ||b - XW||^2 + lam * ||W||_1``, by FISTA."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericError, ShapeError


@dataclass
class LassoProblem:
    design: np.ndarray
    response: np.ndarray
    lam: float
    max_iters: int = 2000
    tol: float = 1e-10

    def __post_init__(self):
        self.design = np.atleast_2d(np.asarray(self.design, dtype=float))
        self.response = np.asarray(self.response, dtype=float).ravel()
        if self.design.shape[0] != len(self.response):
            raise ShapeError(f"design has {self.design.shape[0]} rows but response has {len(self.response)}")
        if self.lam < 0:
            raise ValueError("lam must be non-negative")
        if not np.all(np.isfinite(self.design)):
            raise NumericError("design matrix has non-finite entries")

    def objective(self, w) -> float:
        r = self.response - self.design @ w
        return float(r @ r + self.lam * np.sum(np.abs(w)))


@dataclass
class FistaResult:
    coef: np.ndarray
    objective: float
    iterations: int
    nonzero: int
    lipschitz: float
    history: list = field(default_factory=list, repr=False)


def soft_threshold(value, threshold):
    return np.sign(value) * np.maximum(np.abs(value) - threshold, 0.0)


def lipschitz_constant(X, n_steps: int = 50, tol: float = 1e-8) -> float:
    """Largest eigenvalue of ``2 X^T X`` by power iteration."""
    n = X.shape[1]
    if n == 0:
        return 0.0
    gram = 2.0 * (X.T @ X)
    v = np.ones(n) / np.sqrt(n)
    est = 0.0
    for _ in range(n_steps):
        w = gram @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        v = w / norm
        new = float(v @ gram @ v)
        if abs(new - est) <= tol * max(1.0, abs(new)):
            est = new
            break
        est = new
    return max(est, 0.0)


def fista(problem: LassoProblem, w0=None) -> FistaResult:
    X, b, lam = problem.design, problem.response, problem.lam
    n = X.shape[1]
    w = np.zeros(n) if w0 is None else np.asarray(w0, dtype=float).copy()
    L = lipschitz_constant(X)
    obj = problem.objective(w)
    history = [obj]
    if L == 0.0 or n == 0:
        return FistaResult(w, obj, 0, int(np.count_nonzero(w)), L, history)

    Xtb = X.T @ b
    gram = X.T @ X
    step = 1.0 / L
    z = w.copy()
    t = 1.0
    it = 0
    restarted = False
    for it in range(1, problem.max_iters + 1):
        grad = 2.0 * (gram @ z - Xtb)
        cand = soft_threshold(z - step * grad, lam * step)
        cand_obj = problem.objective(cand)
        if not np.isfinite(cand_obj):
            raise NumericError(f"non-finite objective at iteration {it}")
        slack = 1e-13 * max(1.0, abs(obj))  # rounding noise near the optimum
        if cand_obj > obj + slack:
            # objective went up: drop the momentum and retry from the last
            # iterate; a plain step that still fails means L was underestimated
            if restarted:
                L *= 2.0
                step = 1.0 / L
            z, t, restarted = w.copy(), 1.0, True
            continue
        restarted = False
        moved = float(np.max(np.abs(cand - z)))  # prox-gradient fixed-point residual
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        z = cand + ((t - 1.0) / t_next) * (cand - w)
        decrease = obj - cand_obj
        w, obj, t = cand, min(cand_obj, obj), t_next
        history.append(obj)
        if decrease < problem.tol and it > 1 and moved <= 1e-12 * (1.0 + float(np.max(np.abs(w)))):
            break
    return FistaResult(w, problem.objective(w), it, int(np.count_nonzero(w)), L, history)
