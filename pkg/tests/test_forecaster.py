import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pdecast.errors import ConfigError, DegenerateMetric, NumericError, RolloutError, ShapeError
from pdecast.forecaster import (HOLD_LAST, MULTI, PROVIDED, SINGLE, FunctionModel, RolloutConfig, euler_step,
                                extension_dt, mse, rmse, rollout, rolling_forecast)

from conftest import make_series


def const(c, order=1):
    return FunctionModel(lambda s, i: c, order)


DECAY = FunctionModel(lambda s, i: -s.target[i])


def start(y0=1.0, dt=0.01, m=6):
    t = dt * np.arange(-(m - 1), 1)
    return make_series(t, np.full(m, y0), np.zeros(m))


def exact_decay(dt, n, m=6):
    t = dt * np.arange(-(m - 1), n + 1)
    return make_series(t, np.exp(-np.clip(t, 0, None)), np.zeros(len(t)))


def test_euler_step_examples():
    s = start()
    assert euler_step(const(0.0), s, 0.1) == 1.0
    assert math.isclose(euler_step(const(2.0), s, 0.1), 1.2)
    with pytest.raises(NumericError):
        euler_step(const(float("nan")), s, 0.1)
    with pytest.raises(ConfigError):
        euler_step(const(1.0), s, 0.0)


def test_second_order_step():
    t = np.array([0.0, 0.1])
    s = make_series(t, [1.0, 1.2], [0.0, 0.0])
    y, v = euler_step(const(3.0, order=2), s, 0.1)
    assert math.isclose(v, 2.0 + 0.3) and math.isclose(y, 1.2 + 0.23)


def test_exponential_decay():
    preds = rollout(DECAY, start(), RolloutConfig(100))
    assert abs(preds[-1] - math.exp(-1)) < 0.01
    truth = np.exp(-0.01 * np.arange(1, 101))
    assert np.max(np.abs(preds - truth)) / np.max(truth) < 0.01


def test_halving_dt_halves_error():
    errs = []
    for dt in (0.02, 0.01, 0.005):
        n = round(1 / dt)
        preds = rollout(DECAY, start(dt=dt), RolloutConfig(n))
        errs.append(np.max(np.abs(preds - np.exp(-dt * np.arange(1, n + 1)))))
    for a, b in zip(errs, errs[1:]):
        assert 1.5 <= a / b <= 2.5


def test_rollout_modes_agree_at_one_step():
    s = exact_decay(0.05, 1)
    hist, fut = s.head(6), s.segment(6, 7)
    a = rollout(DECAY, hist, RolloutConfig(1, PROVIDED, MULTI), fut)
    b = rollout(DECAY, hist, RolloutConfig(1, HOLD_LAST, SINGLE), fut)
    assert a.tolist() == b.tolist()


def test_zero_dynamics_hold_last():
    assert rollout(const(0.0), start(2.5), RolloutConfig(5)).tolist() == [2.5] * 5


def test_hold_last_extends_time_by_mean_gap():
    t = np.array([0.0, 1.0, 2.0, 3.0, 4.0, 6.0])
    s = make_series(t, np.zeros(6), np.arange(6.0))
    assert extension_dt(s) == 1.2
    seen = []
    model = FunctionModel(lambda w, i: seen.append((w.timestamps[i], w.covariates[0, i])) or 1.0)
    rollout(model, s, RolloutConfig(3))
    # the window of recent gaps slides over the extended points too: (1+1+1+2+1.2)/5 = 1.24
    assert [round(a, 9) for a, _ in seen] == [6.0, 7.2, 8.44]
    assert [b for _, b in seen] == [5.0, 5.0, 5.0]


def test_single_step_equals_independent_steps():
    s = exact_decay(0.05, 10)
    hist, fut = s.head(6), s.segment(6, 16)
    preds = rollout(DECAY, hist, RolloutConfig(10, mode=SINGLE), fut)
    for j in range(10):
        h = s.head(6 + j)
        assert preds[j] == euler_step(DECAY, h, fut.timestamps[j] - h.timestamps[-1])


def test_single_step_beats_multi_step_on_decay():
    s = exact_decay(0.1, 30)
    hist, fut = s.head(6), s.segment(6, 36)
    single = rollout(DECAY, hist, RolloutConfig(30, mode=SINGLE), fut)
    multi = rollout(DECAY, hist, RolloutConfig(30, PROVIDED), fut)
    assert rmse(single, fut.target) <= rmse(multi, fut.target)


def test_rollout_error_keeps_partial():
    model = FunctionModel(lambda s, i: 1.0 if s.m < 8 else float("inf"))
    with pytest.raises(RolloutError) as info:
        rollout(model, start(), RolloutConfig(5))
    assert info.value.step == 2 and len(info.value.partial) == 2


def test_config_validation():
    with pytest.raises(ConfigError):
        RolloutConfig(0).validate()
    with pytest.raises(ConfigError):
        RolloutConfig(3, PROVIDED).validate(None)
    with pytest.raises(ConfigError):
        RolloutConfig(3, mode=SINGLE).validate(start(m=2))


def test_rmse_examples():
    assert rmse([1, 2], [1, 2]) == 0
    assert rmse([0, 0, 0], [1, -2, 5]) == 1
    assert rmse([1, 1], [1, 3]) == 0.4
    assert mse([1, 1], [1, 3]) == 2.0
    with pytest.raises(DegenerateMetric):
        rmse([1.0], [0.0])
    with pytest.raises(ShapeError):
        rmse([1.0], [1.0, 2.0])


@given(st.lists(st.floats(-100, 100), min_size=1, max_size=20), st.floats(0.1, 10))
def test_rmse_scale_invariant(y, a):
    y = np.array(y)
    if y @ y < 1e-100:
        return
    p = y[::-1] + 1.0
    assert math.isclose(rmse(a * p, a * y), rmse(p, y), rel_tol=1e-9)


def test_rolling_forecast_anchors():
    s = exact_decay(0.05, 20)
    preds, truth, anchors = rolling_forecast(lambda a: DECAY, s, 6, 26, RolloutConfig(7, PROVIDED))
    assert anchors == [6, 13, 20] and len(preds) == 20
    assert truth.tolist() == s.target[6:26].tolist()
