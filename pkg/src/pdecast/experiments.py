"""Single vs hybrid vs meta comparison and the validation grid search.

All three variants forecast the test split by rolling-origin multi-step
rollouts:

* single: one P-block fitted on the training split, frozen;
* hybrid: components fitted on the training split, the grid point with the
  lowest validation error is frozen;
* meta: the controller picks a grid point at every test anchor and the
  components are refitted on the history available at that anchor.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from . import metactrl as mc
from . import pblock as pb
from .forecaster import PROVIDED, MULTI, RolloutConfig, rmse, mse, rolling_forecast
from .hybrid import HybridPde, train_hybrid
from .pblock import TIME, Factor, PBlock, TermSpec
from .series import ResamplePlan, TimeSeries, split_sizes

log = logging.getLogger(__name__)


def linear_library(names):
    """Terms ``dx_j/dt``, ``x_j`` and ``y`` without time gates."""
    k = len(names) - 1
    terms = [TermSpec((Factor.ratio(j, TIME, 1),)) for j in range(1, k + 1)]
    terms += [TermSpec((Factor.raw(j),)) for j in range(1, k + 1)]
    terms.append(TermSpec((Factor.raw(0),)))
    return terms


@dataclass
class AblationConfig:
    ratios: tuple = (0.7, 0.15, 0.15)
    horizon: int = 10
    covariate_policy: str = PROVIDED
    span_fractions: tuple = (1.0, 0.5, 0.25)
    rates: tuple = (1, 2)
    kernel_size: int = 5
    lhs_order: int = 1
    train: pb.TrainConfig = field(default_factory=lambda: pb.TrainConfig(lam=1e-3, epochs=3))
    meta: mc.MetaConfig = field(default_factory=mc.MetaConfig)
    workers: int = 1

    def rollout_config(self):
        return RolloutConfig(self.horizon, self.covariate_policy, MULTI)


@dataclass
class AblationResult:
    single: float
    hybrid: float
    meta: float
    single_mse: float
    hybrid_mse: float
    meta_mse: float
    hybrid_point: dict
    meta_points: list
    validation: list

    def to_dict(self):
        return asdict(self)


def _block_factory(names, cfg: AblationConfig):
    terms = linear_library(names)
    return lambda: PBlock(names, terms, cfg.kernel_size, cfg.lhs_order)


def _forecast(model_at, series, start, stop, cfg):
    preds, truth, _ = rolling_forecast(model_at, series, start, stop, cfg.rollout_config())
    return rmse(preds, truth), mse(preds, truth)


def select_fixed_point(components: HybridPde, grid, series, start, stop, cfg: AblationConfig):
    """Grid point with the lowest relative MSE over ``series[start:stop]``; ties go to the lowest index."""
    scores = []
    for pt in grid:
        H = HybridPde([components.components[i] for i in pt.plan_indices],
                      [components.plans[i] for i in pt.plan_indices], np.array(pt.eps))
        try:
            scores.append(_forecast(lambda a, H=H: H, series, start, stop, cfg)[0])
        except Exception as exc:  # a point that blows up just loses
            log.info("grid point %s failed on validation: %s", pt, exc)
            scores.append(np.inf)
    return int(np.argmin(scores)), scores


def run_ablation(series: TimeSeries, cfg: AblationConfig | None = None) -> AblationResult:
    cfg = cfg or AblationConfig()
    n_train, n_val, n_test = split_sizes(series.m, cfg.ratios)
    train = series.head(n_train)
    factory = _block_factory(series.names, cfg)
    plans = mc.plan_grid(n_train, cfg.span_fractions, cfg.rates)
    grid = mc.default_points(len(plans))
    test_lo, test_hi = n_train + n_val, series.m

    single, _ = pb.train(factory(), train, cfg.train)
    s_rel, s_abs = _forecast(lambda a: single, series, test_lo, test_hi, cfg)
    log.info("single: %.4g", s_rel)

    full, _ = train_hybrid(train, plans, cfg.train, factory, cfg.workers)
    best, val_scores = select_fixed_point(full, grid, series, n_train, test_lo, cfg)
    pt = grid[best]
    fixed = HybridPde([full.components[i] for i in pt.plan_indices],
                      [full.plans[i] for i in pt.plan_indices], np.array(pt.eps))
    h_rel, h_abs = _forecast(lambda a: fixed, series, test_lo, test_hi, cfg)
    log.info("hybrid (point %d): %.4g", best, h_rel)

    meta_cfg = cfg.meta
    hf = mc.HybridFactory(series, plans, factory, cfg.train, meta_cfg.bucket, meta_cfg.eval_window)
    ctrl, _ = mc.train_controller(train, grid, hf, meta_cfg)
    chosen = []

    def meta_at(a):
        p = mc.search_hyperparams(ctrl, series, grid, end=a)
        chosen.append(grid.index(p))
        return hf.hybrid_at(a, p)

    m_rel, m_abs = _forecast(meta_at, series, test_lo, test_hi, cfg)
    log.info("meta: %.4g (points %s)", m_rel, chosen)
    return AblationResult(s_rel, h_rel, m_rel, s_abs, h_abs, m_abs, pt.to_dict(), chosen,
                          [float(v) for v in val_scores])


@dataclass
class GridCell:
    lam: float
    learning_rate: float
    validation: float

    def to_dict(self):
        return asdict(self)


def grid_search(series: TimeSeries, block_factory, lams, learning_rates, base: pb.TrainConfig,
                ratios=(0.7, 0.1, 0.2), rollout: RolloutConfig | None = None):
    """Fit one block per (lambda, learning rate) and keep the best validation relative MSE."""
    rollout = rollout or RolloutConfig(1)
    n_train, n_val, _ = split_sizes(series.m, ratios)
    train = series.head(n_train)
    cells, best = [], None
    for lam in lams:
        for lr in learning_rates:
            tc = pb.TrainConfig(lam, base.epochs, lr, base.fista_iters, base.fista_tol, base.fd_step, base.seed)
            try:
                blk, rep = pb.train(block_factory(), train, tc)
                preds, truth, _ = rolling_forecast(lambda a: blk, series, n_train, n_train + n_val, rollout)
                score = rmse(preds, truth)
            except Exception as exc:
                log.info("grid cell lam=%g lr=%g failed: %s", lam, lr, exc)
                score = float("inf")
            cells.append(GridCell(lam, lr, score))
            if best is None or score < best[0]:
                best = (score, blk, rep, tc)
    return best[1], best[2], best[3], cells
