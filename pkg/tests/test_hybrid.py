import numpy as np
import pytest
from hypothesis import given, strategies as st

from pdecast import hybrid as hy
from pdecast.errors import WeightError
from pdecast.forecaster import FunctionModel, RolloutConfig, rollout
from pdecast.hybrid import HybridPde, evaluate_hybrid, set_weights, train_hybrid
from pdecast.pblock import TIME, Factor, PBlock, TermSpec, TrainConfig, train
from pdecast.series import ResamplePlan, resample
from pdecast.synth import RegimeConfig, generate_regime_switch

from conftest import make_series


class Const:
    lhs_order = 1
    kernel_size = 3
    trained = True
    names = ("y", "x")

    def __init__(self, c):
        self.c = c

    def evaluate(self, series, index):
        return self.c


def series(m=80):
    t = np.linspace(0, 8, m)
    return make_series(t, np.sin(t) + 2, np.cos(1.3 * t))


TERMS = [TermSpec((Factor.ratio(1, TIME, 1),)), TermSpec((Factor.raw(1),)), TermSpec((Factor.raw(0),))]


def factory(names=("y", "x")):
    return lambda: PBlock(names, TERMS)


def test_weight_examples():
    h = HybridPde([Const(2.0), Const(4.0)], [ResamplePlan(10), ResamplePlan(10)], [0.5, 0.5])
    assert evaluate_hybrid(h, series(), 20) == 3.0
    assert set_weights(h, [2, 2]).weights.tolist() == [0.5, 0.5]
    assert set_weights(h, [1, 0]).weights.tolist() == [1.0, 0.0]
    assert evaluate_hybrid(set_weights(h, [1, 0]), series(), 20) == 2.0
    with pytest.raises(WeightError):
        set_weights(h, [0, 0])
    with pytest.raises(WeightError):
        HybridPde([Const(1.0)], [ResamplePlan(10)], [0.7])


@given(st.lists(st.floats(0.01, 1), min_size=3, max_size=3))
def test_constant_components(eps):
    h = HybridPde([Const(1.5)] * 3, [ResamplePlan(10, r) for r in (1, 2, 3)], hy.normalize_weights(eps))
    assert abs(h.evaluate(series(), 40) - 1.5) < 1e-12


@pytest.fixture(scope="module")
def trained_pair():
    s = series()
    return train_hybrid(s, [ResamplePlan(80, 1), ResamplePlan(40, 2)], TrainConfig(lam=1e-3, epochs=2), factory())[0]


@given(st.floats(0, 1), st.integers(0, 10_000))
def test_linear_in_eps(trained_pair, alpha, seed):
    rng = np.random.default_rng(seed)
    e1, e2 = rng.dirichlet([1, 1]), rng.dirichlet([1, 1])
    s = series()
    H = lambda e: evaluate_hybrid(set_weights(trained_pair, e), s, 60)
    mix = alpha * e1 + (1 - alpha) * e2
    assert abs(H(mix) - (alpha * H(e1) + (1 - alpha) * H(e2))) < 1e-12 * max(1.0, abs(H(mix)))


def test_single_plan_hybrid_matches_block():
    s = series()
    h, _ = train_hybrid(s, [ResamplePlan(s.m, 1)], TrainConfig(lam=1e-3, epochs=2), factory())
    blk, _ = train(factory()(), s, TrainConfig(lam=1e-3, epochs=2))
    hist = s.head(60)
    a = rollout(h, hist, RolloutConfig(15))
    b = rollout(blk, hist, RolloutConfig(15))
    assert a.tobytes() == b.tobytes()


def test_duplicate_plans_equal_either_component():
    s = series()
    h, _ = train_hybrid(s, [ResamplePlan(60, 1)] * 2, TrainConfig(lam=1e-3, epochs=1), factory())
    assert h.evaluate(s, 50) == h.components[0].evaluate(h.component_view(0, s, 50), -1)


def test_component_reads_strided_view():
    s = series()
    h, _ = train_hybrid(s, [ResamplePlan(40, 2)], TrainConfig(lam=1e-3, epochs=1), factory())
    view = h.component_view(0, s, 70)
    assert view.timestamps[-1] == s.timestamps[70]
    assert np.allclose(np.diff(view.timestamps), s.timestamps[2] - s.timestamps[0])
    assert h.evaluate(s, 70) == h.components[0].evaluate(resample(s.head(71), ResamplePlan(40, 2)), -1)


def test_window_shortfall_names_component():
    h = HybridPde([Const(1.0), Const(1.0)], [ResamplePlan(10, 1), ResamplePlan(10, 4)], [0.5, 0.5])
    with pytest.raises(IndexError, match="component 1"):
        h.evaluate(series(), 5)


def test_regime_halves_learn_different_coefficients():
    s = generate_regime_switch(RegimeConfig(n_points=400, width=1.0))
    h, _ = train_hybrid(s, [ResamplePlan(s.m, 1), ResamplePlan(s.m // 2, 1)], TrainConfig(lam=1e-4, epochs=3),
                        factory())
    # full-series fit averages the two regimes; the recent half sees only a ~ -1
    w_full = h.components[0].weights[0]
    w_half = h.components[1].weights[0]
    assert w_half < -0.8 and abs(w_full - w_half) > 0.3
    # the oracle: least squares of dy/dt on dx/dt over the newest half alone
    half = s.segment(s.m // 2, s.m)
    dy, dx = np.diff(half.target), np.diff(half.covariates[0])
    assert abs(w_half - (dx @ dy) / (dx @ dx)) < 0.1


def test_training_failure_names_plan():
    s = series(20)
    with pytest.raises(hy.ComponentTrainingError) as info:
        train_hybrid(s, [ResamplePlan(20, 1), ResamplePlan(8, 2)], TrainConfig(epochs=0), factory())
    assert info.value.plan == ResamplePlan(8, 2)


def test_parallel_training_matches_serial():
    s = series()
    plans = [ResamplePlan(80, 1), ResamplePlan(40, 1), ResamplePlan(40, 2)]
    a, _ = train_hybrid(s, plans, TrainConfig(lam=1e-3, epochs=1), factory())
    b, _ = train_hybrid(s, plans, TrainConfig(lam=1e-3, epochs=1), factory(), workers=3)
    assert hy.to_dict(a) == hy.to_dict(b)


def test_serialisation_roundtrip(trained_pair):
    back = hy.from_dict(hy.to_dict(trained_pair))
    assert back.evaluate(series(), 70) == trained_pair.evaluate(series(), 70)
