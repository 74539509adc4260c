"""The P-block: a sparse linear combination of monomials built from learned
derivative ratios, raw channels and (optionally) time.

Each channel ``c`` contributes ``f_c * prod(factors) * T_c`` where a ratio
factor is ``(K * num) / (K * den)`` for one learned stencil ``K`` slid along the
time axis, a raw factor is the channel value at the newest sample and
``T_c`` is ``t`` when the channel's time gate is open, else 1. Windows are
causal: the value at index ``i`` only reads samples ``i-N+1 .. i``.
"""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field

import numpy as np

from .diffop import DENOM_EPS, ConvKernel, constrain_kernel, free_basis
from .errors import DivergenceError, NotTrained, SchemaError, TooShort
from .series import TimeSeries, time_derivative
from .sparsereg import LassoProblem, fista

TIME = -1
FORMAT = "pdecast.pblock"
VERSION = 1


@dataclass(frozen=True, order=True)
class Factor:
    """``kind`` is ``"ratio"`` or ``"raw"``; channel 0 is the target, ``TIME`` is t."""

    kind: str
    num: int
    den: int = 0
    order: int = 0

    @classmethod
    def ratio(cls, num: int, den: int, order: int = 1) -> "Factor":
        if num == den:
            raise ValueError("ratio numerator and denominator must differ")
        if den == 0:
            raise ValueError("the target cannot be a ratio denominator")
        if den == TIME and order != 1:
            raise ValueError("time-denominator ratios are first order only")
        return cls("ratio", num, den, order)

    @classmethod
    def raw(cls, channel: int) -> "Factor":
        return cls("raw", channel)

    @property
    def is_ratio(self) -> bool:
        return self.kind == "ratio"

    def to_dict(self):
        return {"kind": self.kind, "num": self.num, "den": self.den, "order": self.order}


@dataclass(frozen=True)
class TermSpec:
    factors: tuple = ()
    timed: bool = False

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(sorted(self.factors)))
        if not self.factors and not self.timed:
            raise ValueError("a term needs at least one factor or the time gate")

    @property
    def ratio_factors(self):
        return [f for f in self.factors if f.is_ratio]

    def to_dict(self):
        return {"factors": [f.to_dict() for f in self.factors], "timed": self.timed}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(Factor(**f) for f in d["factors"]), bool(d["timed"]))


@dataclass
class TrainConfig:
    lam: float = 0.02
    epochs: int = 20
    learning_rate: float = 1e-2
    fista_iters: int = 2000
    fista_tol: float = 1e-10
    fd_step: float = 1e-5
    seed: int = 0


@dataclass
class CandidateMatrix:
    """Rows are sample indices with a full causal window and a defined LHS."""

    X: np.ndarray
    lhs: np.ndarray
    rows: np.ndarray
    flagged: np.ndarray

    @property
    def shape(self):
        return self.X.shape


@dataclass
class FitReport:
    residual: float
    relative_residual: float
    nonzero: int
    contributions: list
    epochs_run: int
    history: list = field(default_factory=list)
    lipschitz: float = 0.0

    def to_dict(self):
        return {
            "residual": self.residual,
            "relative_residual": self.relative_residual,
            "nonzero": self.nonzero,
            "contributions": self.contributions,
            "epochs_run": self.epochs_run,
            "history": self.history,
        }


def _dot(q, window) -> float:
    # correctly rounded, so the result does not depend on array memory layout
    return math.fsum(q * window)


def _channels(series: TimeSeries):
    chans = {0: series.target, TIME: series.timestamps}
    for j in range(series.k):
        chans[j + 1] = series.covariates[j]
    return chans


class PBlock:
    def __init__(self, names, terms, kernel_size=5, lhs_order=1, kernels=None,
                 weights=None, bias=0.0, denom_eps=DENOM_EPS, n_layers=None):
        self.names = tuple(names)
        self.terms = list(terms)
        self.kernel_size = int(kernel_size)
        self.lhs_order = int(lhs_order)
        self.denom_eps = float(denom_eps)
        self.n_layers = n_layers if n_layers is not None else max((len(t.factors) for t in self.terms), default=1)
        k = len(self.names) - 1
        for term in self.terms:
            for f in term.factors:
                for ch in (f.num, f.den) if f.is_ratio else (f.num,):
                    if ch != TIME and not 0 <= ch <= k:
                        raise SchemaError(f"term refers to channel {ch} but series has {k} covariates")
        if kernels is None:
            kernels = [[ConvKernel.for_order(f.order, self.kernel_size).weights.copy() for f in t.ratio_factors]
                       for t in self.terms]
        self.kernels = [[np.array(q, dtype=float) for q in ks] for ks in kernels]
        self.weights = np.zeros(len(self.terms)) if weights is None else np.array(weights, dtype=float)
        self.bias = float(bias)
        self.trained = False

    @property
    def n_channels(self) -> int:
        return len(self.terms)

    @property
    def window(self) -> int:
        """Samples needed before (and including) an evaluated index."""
        return self.kernel_size

    def copy(self) -> "PBlock":
        return copy.deepcopy(self)

    @classmethod
    def random(cls, names, n_channels=6, n_layers=2, kernel_size=5, lhs_order=1, seed=0,
               max_order=2, time_gate_p=0.5):
        """Draw a reproducible term structure from ``seed``."""
        rng = np.random.default_rng(seed)
        k = len(names) - 1
        terms, seen = [], set()
        attempts = 0
        while len(terms) < n_channels and attempts < 100 * n_channels:
            attempts += 1
            n_used = int(rng.integers(1, n_layers + 1))
            factors = []
            for _ in range(n_used):
                if k > 0 and rng.random() < 0.6:
                    num = int(rng.integers(0, k + 1))
                    dens = [j for j in range(1, k + 1) if j != num] + ([TIME] if num != 0 else [])
                    den = dens[int(rng.integers(len(dens)))]
                    order = 1 if den == TIME else int(rng.integers(1, max_order + 1))
                    factors.append(Factor.ratio(num, den, order))
                else:
                    factors.append(Factor.raw(int(rng.integers(0, k + 1))))
            term = TermSpec(tuple(factors), bool(rng.random() < time_gate_p))
            if term not in seen:
                seen.add(term)
                terms.append(term)
        return cls(names, terms, kernel_size, lhs_order, n_layers=n_layers)

    # -- evaluation -----------------------------------------------------

    def _factor_series(self, chans, f: Factor, q):
        """Factor values over every full window; entry ``i`` ends at sample ``i + N - 1``."""
        n = self.kernel_size
        if not f.is_ratio:
            v = chans[f.num][n - 1:]
            return v, np.zeros(len(v), dtype=bool)
        sw_num = np.lib.stride_tricks.sliding_window_view(chans[f.num], n)
        sw_den = np.lib.stride_tricks.sliding_window_view(chans[f.den], n)
        num, den = sw_num @ q, sw_den @ q
        bad = np.abs(den) < self.denom_eps
        return np.divide(num, den, out=np.zeros_like(num), where=~bad), bad

    def _column(self, chans, c, kernels=None):
        term = self.terms[c]
        ks = self.kernels[c] if kernels is None else kernels
        m = len(chans[0])
        col = np.ones(m - self.kernel_size + 1)
        flag = np.zeros(len(col), dtype=bool)
        r = 0
        for f in term.factors:
            if f.is_ratio:
                v, bad = self._factor_series(chans, f, ks[r])
                r += 1
            else:
                v, bad = self._factor_series(chans, f, None)
            col = col * v
            flag |= bad
        if term.timed:
            col = col * chans[TIME][self.kernel_size - 1:]
        col[flag] = 0.0
        return col, flag

    def features(self, series: TimeSeries):
        """Monomial values for every index with a full window (``N-1 .. m-1``)."""
        chans = _channels(series)
        cols, flags = zip(*(self._column(chans, c) for c in range(self.n_channels))) if self.terms else ((), ())
        n_rows = series.m - self.kernel_size + 1
        X = np.column_stack(cols) if cols else np.zeros((n_rows, 0))
        F = np.column_stack(flags) if flags else np.zeros((n_rows, 0), dtype=bool)
        return X, F

    def _check_names(self, series):
        if series.names != self.names:
            raise SchemaError(f"model channels {self.names} do not match series channels {series.names}")

    def evaluate_detail(self, series: TimeSeries, index: int):
        """Return ``(F, flagged channel indices)`` at one sample."""
        self._check_names(series)
        n = self.kernel_size
        if index < 0:
            index += series.m
        if not n - 1 <= index < series.m:
            raise IndexError(f"index {index} has no full {n}-point causal window in a series of {series.m}")
        chans = _channels(series)
        lo = index - n + 1
        total = 0.0
        flagged = []
        for c, term in enumerate(self.terms):
            val = 1.0
            bad = False
            r = 0
            for f in term.factors:
                if f.is_ratio:
                    q = self.kernels[c][r]
                    r += 1
                    den = _dot(q, chans[f.den][lo:index + 1])
                    if abs(den) < self.denom_eps:
                        bad = True
                        continue
                    val *= _dot(q, chans[f.num][lo:index + 1]) / den
                else:
                    val *= chans[f.num][index]
            if term.timed:
                val *= chans[TIME][index]
            if bad:
                flagged.append(c)
                continue
            total += self.weights[c] * val
        return total + self.bias, flagged

    def evaluate(self, series: TimeSeries, index: int) -> float:
        return self.evaluate_detail(series, index)[0]

    def candidate_matrix(self, series: TimeSeries) -> CandidateMatrix:
        self._check_names(series)
        n = self.kernel_size
        m = series.m
        rows = np.arange(n - 1, m - 1)
        if m < n + 1 or len(rows) == 0:
            raise TooShort(f"series of {m} points too short for kernel size {n}")
        X, F = self.features(series)
        X, F = X[:-1], F[:-1]
        d = time_derivative(series.target, series.timestamps, self.lhs_order)
        # order 1 is left-aligned (entry i at sample i), order 2 centred (entry i at sample i+1)
        lhs = d[rows] if self.lhs_order == 1 else d[rows - 1]
        X = np.column_stack([X, np.ones(len(rows))])
        return CandidateMatrix(X, lhs, rows, F)

    def term_descriptions(self):
        out = [(t, float(w)) for t, w in zip(self.terms, self.weights) if w != 0.0]
        return out

    def coefficients(self):
        return np.append(self.weights, self.bias)

    # -- training -------------------------------------------------------

    def fit_weights(self, cm: CandidateMatrix, cfg: TrainConfig):
        """Sparse regression on centred, unit-RMS columns; intercept left unpenalised."""
        X = cm.X[:, :-1]
        b = cm.lhs
        mu_x = X.mean(axis=0) if len(X) else np.zeros(X.shape[1])
        mu_b = float(b.mean())
        Xc = X - mu_x
        bc = b - mu_b
        sx = np.sqrt(np.mean(Xc**2, axis=0))
        sb = float(np.sqrt(np.mean(bc**2)))
        live = sx > 1e-12 * max(1.0, float(np.max(np.abs(X))) if X.size else 1.0)
        w = np.zeros(X.shape[1])
        result = None
        if np.any(live) and sb > 0:
            Z = Xc[:, live] / sx[live]
            prob = LassoProblem(Z, bc / sb, cfg.lam * len(b), cfg.fista_iters, cfg.fista_tol)
            result = fista(prob)
            w[live] = result.coef * sb / sx[live]
        self.weights = w
        self.bias = mu_b - float(mu_x @ w)
        return result

    def loss(self, cm: CandidateMatrix) -> float:
        r = cm.lhs - cm.X @ self.coefficients()
        return float(np.mean(r**2))

    def _kernel_params(self):
        return [(c, r) for c in range(self.n_channels) for r in range(len(self.kernels[c]))]

    def _loss_with_column(self, chans, cm, c, kernels, base_pred, old, var_b):
        col, _ = self._column(chans, c, kernels)
        pred = base_pred + self.weights[c] * (col[:-1] - old[:-1])
        return float(np.mean((cm.lhs - pred) ** 2)) / var_b

    def kernel_gradient(self, series: TimeSeries, h: float = 1e-5, method: str = "fd"):
        """Gradient of the normalised squared residual w.r.t. the free moments.

        Each kernel is parameterised as ``q + B @ theta`` with ``B`` an
        orthonormal basis of the directions that leave its pinned moments
        untouched. ``method="fd"`` uses central differences in ``theta`` (the
        training route); ``method="analytic"`` differentiates the ratio
        products directly and projects onto ``B``. Returns a list aligned
        with ``self.kernels``.
        """
        cm = self.candidate_matrix(series)
        chans = _channels(series)
        var_b = max(float(np.mean((cm.lhs - cm.lhs.mean()) ** 2)), 1e-300)
        base_pred = cm.X @ self.coefficients()
        resid = cm.lhs - base_pred
        n = self.kernel_size
        bases = [[free_basis(n, f.order) for f in t.ratio_factors] for t in self.terms]
        grads = [[np.zeros(B.shape[1]) for B in bs] for bs in bases]
        for c, r in self._kernel_params():
            if self.weights[c] == 0.0:
                continue
            if method == "fd":
                old, _ = self._column(chans, c)
                B = bases[c][r]
                for p in range(B.shape[1]):
                    vals = []
                    for sgn in (1.0, -1.0):
                        ks = [q.copy() for q in self.kernels[c]]
                        ks[r] = ks[r] + sgn * h * B[:, p]
                        vals.append(self._loss_with_column(chans, cm, c, ks, base_pred, old, var_b))
                    grads[c][r][p] = (vals[0] - vals[1]) / (2 * h)
            elif method == "analytic":
                term = self.terms[c]
                _, flag = self._column(chans, c)
                ok = ~flag
                m_rows = len(flag)
                other = np.ones(m_rows)
                if term.timed:
                    other = other * chans[TIME][n - 1:]
                target_pos, dval = None, None
                rr = 0
                for pos, f in enumerate(term.factors):
                    if f.is_ratio:
                        q = self.kernels[c][rr]
                        if rr == r:
                            wn = np.lib.stride_tricks.sliding_window_view(chans[f.num], n)
                            wd = np.lib.stride_tricks.sliding_window_view(chans[f.den], n)
                            den = wd @ q
                            val = np.divide(wn @ q, den, out=np.zeros_like(den), where=ok)
                            dval = np.zeros((m_rows, n))
                            dval[ok] = (wn[ok] - val[ok, None] * wd[ok]) / den[ok, None]
                            target_pos = pos
                        else:
                            other = other * self._factor_series(chans, f, q)[0]
                        rr += 1
                    else:
                        other = other * self._factor_series(chans, f, None)[0]
                assert target_pos is not None
                dcol = np.where(ok, other, 0.0)[:, None] * dval
                gq = -2.0 * self.weights[c] * (resid @ dcol[:-1]) / len(resid) / var_b
                grads[c][r] = bases[c][r].T @ gq
            else:
                raise ValueError(f"unknown gradient method {method!r}")
        return grads

    def _kernel_step(self, grads, lr):
        new = []
        for c, ks in enumerate(self.kernels):
            fs = self.terms[c].ratio_factors
            new.append([constrain_kernel(q - lr * (free_basis(len(q), f.order) @ g), f.order).weights.copy()
                        for q, g, f in zip(ks, grads[c], fs)])
        return new


def train(block: PBlock, series: TimeSeries, config: TrainConfig | None = None):
    """Alternate sparse regression on the output weights with projected
    gradient steps on the free kernel moments. Returns ``(block, report)``."""
    cfg = config or TrainConfig()
    blk = block.copy()
    cm = blk.candidate_matrix(series)
    var_b = max(float(np.mean((cm.lhs - cm.lhs.mean()) ** 2)), 1e-300)
    res = blk.fit_weights(cm, cfg)
    lip = res.lipschitz if res is not None else 0.0
    loss0 = blk.loss(cm)
    best, best_loss = blk.copy(), loss0
    history = [loss0]
    lr = cfg.learning_rate
    epochs_run = 0
    for epoch in range(cfg.epochs):
        if not any(len(ks) for ks in blk.kernels) or not np.any(blk.weights):
            break
        grads = blk.kernel_gradient(series, cfg.fd_step, "fd")
        cur = blk.loss(cm)
        accepted = False
        for _ in range(8):
            trial = blk.copy()
            trial.kernels = blk._kernel_step(grads, lr)
            tcm = trial.candidate_matrix(series)
            if trial.loss(tcm) < cur:
                accepted = True
                break
            lr *= 0.5
        if not accepted:
            break
        lr *= 2.0  # let the step grow back after a success
        trial.fit_weights(tcm, cfg)
        blk, cm = trial, tcm
        loss = blk.loss(cm)
        history.append(loss)
        epochs_run = epoch + 1
        if not np.isfinite(loss) or loss > 10 * loss0:
            best.trained = True
            raise DivergenceError(f"kernel training diverged at epoch {epoch}: {loss:.3g} vs {loss0:.3g}", best)
        if loss < best_loss:
            best, best_loss = blk.copy(), loss
    best.trained = True
    cm = best.candidate_matrix(series)
    contrib = [float(np.mean(np.abs(w * cm.X[:, c]))) for c, w in enumerate(best.weights)]
    report = FitReport(
        residual=best_loss,
        relative_residual=best_loss / var_b,
        nonzero=int(np.count_nonzero(best.weights)),
        contributions=contrib,
        epochs_run=epochs_run,
        history=history,
        lipschitz=lip,
    )
    return best, report


# -- persistence ---------------------------------------------------------

def to_dict(block: PBlock) -> dict:
    if not block.trained:
        raise NotTrained("only trained blocks are serialised")
    return {
        "format": FORMAT,
        "version": VERSION,
        "names": list(block.names),
        "kernel_size": block.kernel_size,
        "lhs_order": block.lhs_order,
        "n_layers": block.n_layers,
        "denom_eps": block.denom_eps,
        "bias": float(block.bias),
        "terms": [
            dict(t.to_dict(), weight=float(w), kernels=[[float(v) for v in q] for q in ks])
            for t, w, ks in zip(block.terms, block.weights, block.kernels)
        ],
    }


def from_dict(d: dict) -> PBlock:
    if d.get("format") != FORMAT:
        raise SchemaError(f"not a P-block document: format={d.get('format')!r}")
    if d.get("version") != VERSION:
        raise SchemaError(f"unsupported P-block version {d.get('version')!r}")
    terms = [TermSpec.from_dict(t) for t in d["terms"]]
    blk = PBlock(
        d["names"], terms, d["kernel_size"], d["lhs_order"],
        kernels=[t["kernels"] for t in d["terms"]],
        weights=[t["weight"] for t in d["terms"]],
        bias=d["bias"], denom_eps=d["denom_eps"], n_layers=d["n_layers"],
    )
    blk.trained = True
    return blk
