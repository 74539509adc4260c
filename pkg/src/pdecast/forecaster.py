"""Forward-Euler forecasting with a learned right-hand side, plus the error metric.

A model is anything with ``evaluate(series, index) -> float``, an
``lhs_order`` (1 or 2) and a ``window`` (samples needed up to the index).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigError, DegenerateMetric, NumericError, RolloutError, ShapeError, TooShort
from .series import TimeSeries

SINGLE = "single"
MULTI = "multi"
HOLD_LAST = "hold-last"
PROVIDED = "provided-futures"


@dataclass
class FunctionModel:
    """Wrap a plain ``fn(series, index) -> float`` as a model."""

    fn: Callable
    lhs_order: int = 1
    window: int = 1

    def evaluate(self, series, index):
        return self.fn(series, index)


@dataclass(frozen=True)
class RolloutConfig:
    horizon: int = 1
    covariate_policy: str = HOLD_LAST
    mode: str = MULTI

    def validate(self, future: TimeSeries | None = None):
        if self.horizon < 1:
            raise ConfigError("horizon must be >= 1")
        if self.mode not in (SINGLE, MULTI):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.covariate_policy not in (HOLD_LAST, PROVIDED):
            raise ConfigError(f"unknown covariate policy {self.covariate_policy!r}")
        need_future = self.mode == SINGLE or self.covariate_policy == PROVIDED
        if need_future and (future is None or future.m < self.horizon):
            raise ConfigError(f"{self.mode}/{self.covariate_policy} rollout needs {self.horizon} future rows")


def extension_dt(series: TimeSeries, n: int = 5) -> float:
    return float(np.mean(np.diff(series.timestamps[-(n + 1):])))


def euler_step(model, series: TimeSeries, dt: float, velocity: float | None = None):
    """Advance the target one step.

    For a first-order model returns ``y_last + F dt``. For a second-order model
    the state is ``(y, dy/dt)``; returns ``(y_next, v_next)`` using the
    semi-implicit update ``v += F dt; y += v dt``. ``velocity`` defaults to the
    backward difference of the last two samples.
    """
    if dt <= 0:
        raise ConfigError("dt must be positive")
    idx = series.m - 1
    F = model.evaluate(series, idx)
    if not math.isfinite(F):
        raise NumericError(f"non-finite right-hand side at sample {idx}", index=idx)
    y = series.target[idx]
    if model.lhs_order == 1:
        return y + F * dt
    if velocity is None:
        if series.m < 2:
            raise TooShort("second-order stepping needs two samples")
        velocity = (series.target[idx] - series.target[idx - 1]) / (series.timestamps[idx] - series.timestamps[idx - 1])
    v_next = velocity + F * dt
    return y + v_next * dt, v_next


def rollout(model, series: TimeSeries, config: RolloutConfig, future: TimeSeries | None = None) -> np.ndarray:
    """Forecast ``config.horizon`` target values after the end of ``series``.

    ``future`` supplies the true continuation: required for single-step mode
    (each step restarts from the true history) and for provided covariates.
    """
    config.validate(future)
    tau = config.horizon
    preds = np.empty(tau)

    if config.mode == SINGLE:
        work = series
        for j in range(tau):
            dt = future.timestamps[j] - work.timestamps[-1]
            try:
                out = euler_step(model, work, dt)
            except NumericError as exc:
                raise RolloutError(str(exc), j, preds[:j].copy()) from exc
            preds[j] = out if model.lhs_order == 1 else out[0]
            work = work.append(future.timestamps[j], future.target[j], future.covariates[:, j])
        return preds

    work = series
    velocity = None
    for j in range(tau):
        if config.covariate_policy == PROVIDED:
            t_next = future.timestamps[j]
            cov = future.covariates[:, j]
        else:
            t_next = work.timestamps[-1] + extension_dt(work)
            cov = work.covariates[:, -1]
        dt = t_next - work.timestamps[-1]
        try:
            out = euler_step(model, work, dt, velocity)
        except NumericError as exc:
            raise RolloutError(str(exc), j, preds[:j].copy()) from exc
        if model.lhs_order == 1:
            y_next = out
        else:
            y_next, velocity = out
        if not math.isfinite(y_next):
            raise RolloutError(f"non-finite prediction at step {j}", j, preds[:j].copy())
        preds[j] = y_next
        work = work.append(t_next, y_next, cov)
    return preds


def rmse(predictions, truth) -> float:
    """Relative mean squared error ``sum (p - y)^2 / sum y^2``."""
    p = np.asarray(predictions, dtype=float)
    y = np.asarray(truth, dtype=float)
    if p.shape != y.shape or p.size == 0:
        raise ShapeError(f"predictions {p.shape} and truth {y.shape} must match and be non-empty")
    denom = float(y @ y)
    if denom == 0.0:
        raise DegenerateMetric("truth is identically zero")
    return float(np.sum((p - y) ** 2) / denom)


def mse(predictions, truth) -> float:
    p = np.asarray(predictions, dtype=float)
    y = np.asarray(truth, dtype=float)
    return float(np.mean((p - y) ** 2))


def rolling_forecast(model_at, series: TimeSeries, start: int, stop: int, config: RolloutConfig):
    """Rolling-origin evaluation over ``series[start:stop]``.

    Anchors step by the horizon; at each anchor ``a`` the model returned by
    ``model_at(a)`` forecasts samples ``a .. a+tau-1`` from history ``[:a]``.
    Returns ``(predictions, truth, anchors)``.
    """
    tau = config.horizon
    preds, truth, anchors = [], [], []
    a = start
    while a < stop:
        h = min(tau, stop - a)
        cfg = RolloutConfig(h, config.covariate_policy, config.mode)
        hist = series.head(a)
        fut = series.segment(a, a + h)
        preds.append(rollout(model_at(a), hist, cfg, fut))
        truth.append(fut.target)
        anchors.append(a)
        a += h
    return np.concatenate(preds), np.concatenate(truth), anchors
