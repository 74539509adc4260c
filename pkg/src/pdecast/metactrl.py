"""Meta-controller that predicts a hybrid model's residual error from the recent
series window and a hyperparameter choice, and picks the choice with the
smallest predicted error.

Encoder: one GRU layer over the trailing window. With input ``x_t`` and
state ``h``::

    z  = sigmoid(Wz x + Uz h + bz)
    r  = sigmoid(Wr x + Ur h + br)
    n  = tanh(Wn x + bn + r * (Un h + bun))
    h' = (1 - z) * n + z * h

Scorer: ``s = w2 . tanh(W1 [h_T, e] + b1) + b2`` where ``e`` is the
hyperparameter encoding (the weight mass put on every plan of the grid).
The controller outputs ``scale * s``. Gradients are derived by hand
(backprop through time) and checked against central differences in tests.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import pblock as pb
from .errors import NumericError, SchemaError, TrainingDataError, WeightError
from .hybrid import HybridPde
from .series import ResamplePlan, TimeSeries, resample, time_derivative

FORMAT = "pdecast.metactrl"
VERSION = 1

GRU_PARAMS = ("Wz", "Wr", "Wn", "Uz", "Ur", "Un", "bz", "br", "bn", "bun")
SCORER_PARAMS = ("W1", "b1", "w2", "b2")


@dataclass(frozen=True)
class HyperparamPoint:
    plan_indices: tuple
    eps: tuple

    def __post_init__(self):
        object.__setattr__(self, "plan_indices", tuple(int(i) for i in self.plan_indices))
        object.__setattr__(self, "eps", tuple(float(e) for e in self.eps))
        if len(self.plan_indices) != len(self.eps) or not self.eps:
            raise WeightError("plan_indices and eps must be non-empty and equally long")
        if min(self.eps) < 0 or abs(sum(self.eps) - 1.0) > 1e-9:
            raise WeightError(f"eps must be non-negative and sum to 1: {self.eps}")

    def encode(self, n_plans: int) -> np.ndarray:
        e = np.zeros(n_plans)
        for i, w in zip(self.plan_indices, self.eps):
            if not 0 <= i < n_plans:
                raise WeightError(f"plan index {i} outside grid of {n_plans}")
            e[i] += w
        return e

    def to_dict(self):
        return {"plan_indices": list(self.plan_indices), "eps": list(self.eps)}


def plan_grid(m: int, span_fractions=(1.0, 0.5, 0.25), rates=(1, 2)):
    return [ResamplePlan(max(2, int(m * f)), r) for f in span_fractions for r in rates]


def default_points(n_plans: int):
    """Unit vectors, the uniform mix, and a 0.5/0.5 pair for each adjacent plan pair."""
    pts = [HyperparamPoint((i,), (1.0,)) for i in range(n_plans)]
    if n_plans > 1:
        pts.append(HyperparamPoint(tuple(range(n_plans)), (1.0 / n_plans,) * n_plans))
        pts.extend(HyperparamPoint((i, i + 1), (0.5, 0.5)) for i in range(n_plans - 1))
    return pts


def _sigmoid(a):
    return 0.5 * (1.0 + np.tanh(0.5 * a))


@dataclass
class MetaConfig:
    hidden_dim: int = 16
    scorer_dim: int = 32
    window: int = 64
    anchor_stride: int = 10
    eval_window: int = 10
    bucket: int = 50
    steps_per_anchor: int = 20
    final_steps: int = 300
    learning_rate: float = 1e-2
    momentum: float = 0.9
    init_scale: float = 0.1
    verbatim_alg1: bool = False
    seed: int = 0


class MetaController:
    def __init__(self, n_inputs: int, n_plans: int, hidden_dim: int = 16, scorer_dim: int = 32,
                 window: int = 64, seed: int = 0, init_scale: float = 0.1):
        self.n_inputs = n_inputs
        self.n_plans = n_plans
        self.hidden_dim = hidden_dim
        self.scorer_dim = scorer_dim
        self.window = window
        rng = np.random.default_rng(seed)
        d, i, s = hidden_dim, n_inputs, scorer_dim
        shapes = {
            "Wz": (d, i), "Wr": (d, i), "Wn": (d, i),
            "Uz": (d, d), "Ur": (d, d), "Un": (d, d),
            "bz": (d,), "br": (d,), "bn": (d,), "bun": (d,),
            "W1": (s, d + n_plans), "b1": (s,), "w2": (s,), "b2": (),
        }
        self.params = {}
        for name in GRU_PARAMS + SCORER_PARAMS:
            shp = shapes[name]
            if name.startswith("b"):
                self.params[name] = np.zeros(shp)
            else:
                self.params[name] = rng.normal(0.0, init_scale, size=shp)
        self.mean = np.zeros(n_inputs - 1)
        self.std = np.ones(n_inputs - 1)
        self.gap_scale = 1.0
        self.scale = 1.0
        self.velocity = {k: np.zeros_like(v) for k, v in self.params.items()}
        self.steps = 0

    # -- inputs ------------------------------------------------------------

    def set_normalization(self, series: TimeSeries):
        vals = np.vstack([series.target, series.covariates])
        self.mean = vals.mean(axis=1)
        std = vals.std(axis=1)
        self.std = np.where(std > 0, std, 1.0)
        self.gap_scale = float(np.median(np.diff(series.timestamps)))

    def encode_window(self, series: TimeSeries, end: int | None = None, length: int | None = None) -> np.ndarray:
        """Normalised ``(T, k + 2)`` input for the window ending just before ``end``."""
        end = series.m if end is None else end
        length = self.window if length is None else length
        lo = max(0, end - length)
        if end - lo < 2:
            raise TrainingDataError("encoder window needs at least 2 points")
        vals = np.vstack([series.target[lo:end], series.covariates[:, lo:end]])
        z = (vals - self.mean[:, None]) / self.std[:, None]
        t = series.timestamps[max(0, lo - 1):end]
        gaps = np.diff(t) / self.gap_scale
        if lo == 0:
            gaps = np.concatenate([[1.0], gaps])
        return np.vstack([z, gaps[None, :]]).T

    # -- forward / backward -----------------------------------------------

    def _encode(self, X, keep=False):
        """X: (B, T, in). Returns final state and (optionally) the per-step cache."""
        p = self.params
        B, T, _ = X.shape
        h = np.zeros((B, self.hidden_dim))
        cache = []
        for t in range(T):
            x = X[:, t, :]
            z = _sigmoid(x @ p["Wz"].T + h @ p["Uz"].T + p["bz"])
            r = _sigmoid(x @ p["Wr"].T + h @ p["Ur"].T + p["br"])
            hn = h @ p["Un"].T + p["bun"]
            n = np.tanh(x @ p["Wn"].T + p["bn"] + r * hn)
            h_new = (1.0 - z) * n + z * h
            if keep:
                cache.append((x, h, z, r, hn, n))
            h = h_new
        return h, cache

    def _score(self, H, E):
        """H: (B, d), E: (P, n_plans) -> scores (B, P) and the activations."""
        p = self.params
        B, P = H.shape[0], E.shape[0]
        U = np.concatenate([np.repeat(H[:, None, :], P, axis=1), np.repeat(E[None, :, :], B, axis=0)], axis=2)
        A1 = np.tanh(U @ p["W1"].T + p["b1"])
        S = A1 @ p["w2"] + p["b2"]
        return S, U, A1

    def forward(self, X, E):
        H, _ = self._encode(X)
        return self._score(H, E)[0]

    def loss_and_grad(self, X, E, Y, mask=None):
        """Mean squared error of ``scores`` against ``Y / scale`` and its gradient.

        X: (B, T, in) windows, E: (P, n_plans) encodings, Y: (B, P) targets,
        ``mask`` (B, P) marks which pairs carry a target.
        """
        p = self.params
        mask = np.ones_like(Y, dtype=bool) if mask is None else mask
        count = max(int(mask.sum()), 1)
        H, cache = self._encode(X, keep=True)
        S, U, A1 = self._score(H, E)
        diff = np.where(mask, S - Y / self.scale, 0.0)
        loss = float(np.sum(diff**2) / count)
        g = {k: np.zeros_like(v) for k, v in p.items()}

        dS = 2.0 * diff / count
        g["w2"] = np.einsum("bp,bps->s", dS, A1)
        g["b2"] = np.array(dS.sum())
        dpre = dS[:, :, None] * p["w2"] * (1.0 - A1**2)
        g["W1"] = np.einsum("bps,bpu->su", dpre, U)
        g["b1"] = dpre.sum(axis=(0, 1))
        dU = dpre @ p["W1"]
        dh = dU[:, :, : self.hidden_dim].sum(axis=1)

        for x, h_prev, z, r, hn, n in reversed(cache):
            dn = dh * (1.0 - z)
            dz = dh * (h_prev - n)
            dh_prev = dh * z
            dan = dn * (1.0 - n**2)
            g["Wn"] += dan.T @ x
            g["bn"] += dan.sum(axis=0)
            dr = dan * hn
            dhn = dan * r
            g["Un"] += dhn.T @ h_prev
            g["bun"] += dhn.sum(axis=0)
            dh_prev += dhn @ p["Un"]
            dar = dr * r * (1.0 - r)
            g["Wr"] += dar.T @ x
            g["Ur"] += dar.T @ h_prev
            g["br"] += dar.sum(axis=0)
            dh_prev += dar @ p["Ur"]
            daz = dz * z * (1.0 - z)
            g["Wz"] += daz.T @ x
            g["Uz"] += daz.T @ h_prev
            g["bz"] += daz.sum(axis=0)
            dh_prev += daz @ p["Uz"]
            dh = dh_prev
        return loss, g

    def step(self, grads, learning_rate: float, momentum: float = 0.9):
        for k in self.params:
            v = momentum * self.velocity[k] - learning_rate * grads[k]
            self.velocity[k] = v
            self.params[k] = self.params[k] + v
        self.steps += 1

    # -- inference ---------------------------------------------------------

    def predict_many(self, series: TimeSeries, points, end: int | None = None) -> np.ndarray:
        X = self.encode_window(series, end)[None]
        E = np.array([pt.encode(self.n_plans) for pt in points])
        S = self.forward(X, E)[0] * self.scale
        if not np.all(np.isfinite(S)):
            raise NumericError("non-finite controller output")
        return S


def predict_loss(controller: MetaController, series: TimeSeries, point: HyperparamPoint, end=None) -> float:
    return float(controller.predict_many(series, [point], end)[0])


def search_hyperparams(controller: MetaController, series: TimeSeries, grid, end=None) -> HyperparamPoint:
    """Grid point with the smallest predicted error; ties go to the lowest index."""
    if not grid:
        raise WeightError("empty hyperparameter grid")
    losses = controller.predict_many(series, grid, end)
    return grid[int(np.argmin(losses))]


# -- realised errors --------------------------------------------------------

class HybridFactory:
    """Trains (and caches) hybrid components on series prefixes.

    Components for an anchor ``a`` are fitted on ``series[:b]`` with ``b`` the
    anchor rounded down to a multiple of ``bucket``; ``bucket=1`` retrains at
    every anchor.
    """

    def __init__(self, series: TimeSeries, plans, block_factory, train_config: pb.TrainConfig,
                 bucket: int = 50, eval_window: int = 10):
        self.series = series
        self.plans = list(plans)
        self.block_factory = block_factory
        self.train_config = train_config
        self.bucket = max(1, int(bucket))
        self.eval_window = eval_window
        self.cache = {}
        self._lhs = None

    @property
    def lhs_order(self):
        return self.block_factory().lhs_order

    def min_history(self) -> int:
        blk = self.block_factory()
        need = blk.kernel_size + blk.lhs_order + 8
        return max(p.rate for p in self.plans) * need

    def prefix_end(self, anchor: int) -> int:
        return max(self.min_history(), (anchor // self.bucket) * self.bucket)

    def component(self, plan_index: int, anchor: int):
        end = self.prefix_end(anchor)
        key = (plan_index, end)
        if key not in self.cache:
            prefix = self.series.head(end)
            plan = self.plans[plan_index].clipped(prefix.m)
            blk, _ = pb.train(self.block_factory(), resample(prefix, plan), self.train_config)
            self.cache[key] = blk
        return self.cache[key]

    def hybrid_at(self, anchor: int, point: HyperparamPoint) -> HybridPde:
        comps = [self.component(i, anchor) for i in point.plan_indices]
        plans = [self.plans[i] for i in point.plan_indices]
        return HybridPde(comps, plans, np.array(point.eps))

    def realized_errors(self, anchor: int, points) -> np.ndarray:
        """Mean squared residual of the time derivative over the samples after ``anchor``."""
        s = self.series
        order = self.lhs_order
        if self._lhs is None:
            self._lhs = time_derivative(s.target, s.timestamps, order)
        last = s.m - 2  # last sample with a defined derivative for either order
        idx = np.arange(anchor, min(anchor + self.eval_window, last + 1))
        if len(idx) == 0:
            return np.full(len(points), np.nan)
        lhs = self._lhs[idx] if order == 1 else self._lhs[idx - 1]
        out = np.empty(len(points))
        for p, pt in enumerate(points):
            H = self.hybrid_at(anchor, pt)
            pred = np.array([H.evaluate(s, i) for i in idx])
            out[p] = float(np.mean((lhs - pred) ** 2))
        return out


def anchor_schedule(m_train: int, stride: int):
    return list(range(0, m_train, stride))


@dataclass
class MetaDataset:
    windows: list = field(default_factory=list)
    targets: list = field(default_factory=list)
    anchors: list = field(default_factory=list)


def _fit(controller: MetaController, data: MetaDataset, E, steps, cfg: MetaConfig):
    X = np.stack(data.windows)
    Y = np.stack(data.targets)
    mask = np.isfinite(Y)
    Y = np.where(mask, Y, 0.0)
    loss = np.nan
    for _ in range(steps):
        loss, g = controller.loss_and_grad(X, E, Y, mask)
        if not np.isfinite(loss):
            raise NumericError("controller loss became non-finite")
        controller.step(g, cfg.learning_rate, cfg.momentum)
    return loss


def train_controller(series: TimeSeries, grid, factory, config: MetaConfig | None = None):
    """Walk anchors over ``series`` (the training split), record every grid point's
    realised error and fit the controller to them.

    ``factory`` needs ``realized_errors(anchor, points)``, ``min_history()`` and
    ``plans``. Returns ``(controller, dataset)``.
    """
    cfg = config or MetaConfig()
    grid = list(grid)
    if not grid:
        raise WeightError("empty hyperparameter grid")
    stride = 1 if cfg.verbatim_alg1 else cfg.anchor_stride
    if cfg.verbatim_alg1 and hasattr(factory, "bucket"):
        factory.bucket = 1
    n_plans = len(factory.plans)
    ctrl = MetaController(series.k + 2, n_plans, cfg.hidden_dim, cfg.scorer_dim, cfg.window, cfg.seed, cfg.init_scale)
    ctrl.set_normalization(series)
    E = np.array([pt.encode(n_plans) for pt in grid])

    start = max(factory.min_history(), min(cfg.window, series.m // 2))
    last = series.m - getattr(factory, "eval_window", 1) - 1
    anchors = [a for a in anchor_schedule(series.m, stride) if start <= a <= last]
    length = min(cfg.window, start)
    data = MetaDataset()
    for a in anchors:
        errs = factory.realized_errors(a, grid)
        if not np.any(np.isfinite(errs)):
            continue
        data.windows.append(ctrl.encode_window(series, a, length))
        data.targets.append(errs)
        data.anchors.append(a)
        if len(data.anchors) == 1:
            finite = np.concatenate([t[np.isfinite(t)] for t in data.targets])
            ctrl.scale = float(np.sqrt(np.mean(finite**2))) or 1.0
        _fit(ctrl, data, E, cfg.steps_per_anchor, cfg)
    if not data.anchors:
        raise TrainingDataError("no anchor produced a usable realised error")
    # rescale to the whole accumulated set before the final passes
    finite = np.concatenate([t[np.isfinite(t)] for t in data.targets])
    new_scale = float(np.sqrt(np.mean(finite**2))) or 1.0
    ctrl.params["w2"] *= ctrl.scale / new_scale
    ctrl.params["b2"] = ctrl.params["b2"] * ctrl.scale / new_scale
    ctrl.scale = new_scale
    ctrl.velocity = {k: np.zeros_like(v) for k, v in ctrl.params.items()}
    _fit(ctrl, data, E, cfg.final_steps, cfg)
    ctrl.window = length
    return ctrl, data


# -- persistence --------------------------------------------------------------

def to_dict(ctrl: MetaController, grid=None, plans=None) -> dict:
    return {
        "format": FORMAT,
        "version": VERSION,
        "n_inputs": ctrl.n_inputs,
        "n_plans": ctrl.n_plans,
        "hidden_dim": ctrl.hidden_dim,
        "scorer_dim": ctrl.scorer_dim,
        "window": ctrl.window,
        "steps": ctrl.steps,
        "scale": ctrl.scale,
        "normalization": {"mean": ctrl.mean.tolist(), "std": ctrl.std.tolist(), "gap_scale": ctrl.gap_scale},
        "params": {k: np.asarray(v).tolist() for k, v in ctrl.params.items()},
        "grid": [pt.to_dict() for pt in grid] if grid is not None else None,
        "plans": [{"span": p.span, "rate": p.rate} for p in plans] if plans is not None else None,
    }


def from_dict(d: dict):
    if d.get("format") != FORMAT or d.get("version") != VERSION:
        raise SchemaError(f"not a controller document (format={d.get('format')!r})")
    ctrl = MetaController(d["n_inputs"], d["n_plans"], d["hidden_dim"], d["scorer_dim"], d["window"])
    ctrl.params = {k: np.array(v, dtype=float) for k, v in d["params"].items()}
    ctrl.velocity = {k: np.zeros_like(v) for k, v in ctrl.params.items()}
    ctrl.steps = d["steps"]
    ctrl.scale = d["scale"]
    ctrl.mean = np.array(d["normalization"]["mean"])
    ctrl.std = np.array(d["normalization"]["std"])
    ctrl.gap_scale = d["normalization"]["gap_scale"]
    grid = [HyperparamPoint(**p) for p in d["grid"]] if d.get("grid") else None
    plans = [ResamplePlan(p["span"], p["rate"]) for p in d["plans"]] if d.get("plans") else None
    return ctrl, grid, plans
