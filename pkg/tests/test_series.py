import numpy as np
import pytest
from hypothesis import given, strategies as st

from pdecast.errors import IngestError, ParseError, PlanError, TooShort, UnsupportedOrder
from pdecast.series import (ResamplePlan, TimeSeries, align_nearest_preceding, finite_diff_time, load_csv,
                            moving_average, resample, split, time_derivative)

from conftest import make_series


def test_load_csv_basic(write_csv):
    s = load_csv(write_csv("time,y,x\n0,1,2\n1,2,3\n2,3,4\n"), "y")
    assert (s.m, s.k) == (3, 1)
    assert s.target.tolist() == [1, 2, 3]
    assert s.covariates[0].tolist() == [2, 3, 4]


def test_load_csv_sorts_rows(write_csv):
    a = load_csv(write_csv("time,y,x\n0,1,2\n1,2,3\n2,3,4\n", "a.csv"), "y")
    b = load_csv(write_csv("time,y,x\n2,3,4\n0,1,2\n1,2,3\n", "b.csv"), "y")
    assert a.equals(b)


def test_load_csv_target_not_first(write_csv):
    s = load_csv(write_csv("time,a,b\n0,1,2\n1,2,3\n"), "b")
    assert s.names == ("b", "a")
    assert s.target.tolist() == [2, 3]


@pytest.mark.parametrize("text,err", [
    ("time,y,x\n0,1,2\n1,2,3\n1,3,4\n", IngestError),
    ("time,y,x\n0,1,2\n1,abc,3\n", ParseError),
    ("time,y,x\n0,1,2\n", TooShort),
    ("t,y\n0,1\n1,2\n", IngestError),
    ("time,y\n0,1\n1,nan\n", IngestError),
])
def test_load_csv_errors(write_csv, text, err):
    with pytest.raises(err):
        load_csv(write_csv(text), "y")


def test_parse_error_names_line(write_csv):
    with pytest.raises(ParseError, match=":3"):
        load_csv(write_csv("time,y\n0,1\n1,oops\n"), "y")


def test_missing_target(write_csv):
    with pytest.raises(IngestError):
        load_csv(write_csv("time,y\n0,1\n1,2\n"), "z")


def test_csv_roundtrip(tmp_path):
    s = make_series([0, 0.5, 1.7], [1.0, -2.25, 1e-9], [3, 4, 5.5])
    s.to_csv(tmp_path / "r.csv")
    assert load_csv(tmp_path / "r.csv", "y").equals(s)


def test_series_validation():
    with pytest.raises(Exception):
        make_series([0, 0], [1, 2])
    with pytest.raises(Exception):
        make_series([], [])
    with pytest.raises(Exception):
        make_series([0, 1], [1, np.inf])


def _ramp(m):
    t = np.arange(m, dtype=float)
    return make_series(t, t, t)


def test_resample_indices():
    s = resample(_ramp(10), ResamplePlan(6, 2))
    assert s.timestamps.tolist() == [5, 7, 9]


def test_resample_identity():
    s = _ramp(10)
    assert resample(s, ResamplePlan(10, 1)).equals(s)


def test_resample_plan_error():
    with pytest.raises(PlanError):
        resample(_ramp(10), ResamplePlan(3, 5))
    with pytest.raises(PlanError):
        resample(_ramp(10), ResamplePlan(11, 1))


@given(st.integers(2, 60), st.data())
def test_resample_keeps_newest_point(m, data):
    span = data.draw(st.integers(2, m))
    rate = data.draw(st.integers(1, span // 2))
    idx = ResamplePlan(span, rate).indices(m)
    assert idx[-1] == m - 1
    assert idx[0] >= m - span
    assert np.all(np.diff(idx) == rate)


@given(st.integers(2, 40))
def test_resample_full_idempotent(m):
    s = _ramp(m)
    p = ResamplePlan(m, 1)
    assert resample(resample(s, p), p).equals(s)


@pytest.mark.parametrize("m,ratios,sizes", [(100, (0.7, 0.1, 0.2), (70, 10, 20)),
                                            (20, (0.5, 0.25, 0.25), (10, 5, 5))])
def test_split_sizes(m, ratios, sizes):
    parts = split(_ramp(m), ratios)
    assert tuple(p.m for p in parts) == sizes


def test_split_too_short():
    with pytest.raises(TooShort):
        split(_ramp(10), (0.7, 0.1, 0.2))


@given(st.integers(20, 200))
def test_split_concatenates_back(m):
    a, b, c = split(_ramp(m), (0.7, 0.1, 0.2))
    assert a.concat(b).concat(c).equals(_ramp(m))


def test_first_difference():
    s = make_series([0, 1, 2], [0, 1, 4])
    assert finite_diff_time(s, 1).tolist() == [1, 3]


def test_second_difference_of_square():
    t = np.array([0.0, 1, 2, 3])
    assert np.allclose(finite_diff_time(make_series(t, t**2), 2), [2, 2])


def test_second_difference_nonuniform_square():
    t = np.array([0.0, 0.3, 1.1, 1.2, 2.0])
    assert np.allclose(time_derivative(t**2, t, 2), 2.0)


def test_difference_of_constant():
    t = np.sort(np.random.default_rng(0).random(8))
    assert np.all(finite_diff_time(make_series(t, np.full(8, 3.0)), 1) == 0)


def test_unsupported_order():
    with pytest.raises(UnsupportedOrder):
        finite_diff_time(_ramp(5), 3)


@given(st.lists(st.floats(0.01, 5), min_size=2, max_size=20), st.floats(-5, 5), st.floats(-5, 5))
def test_linear_series_slope(gaps, a, b):
    t = np.concatenate([[0.0], np.cumsum(gaps)])
    d = time_derivative(a * t + b, t, 1)
    assert np.allclose(d, a, atol=1e-9 * (1 + abs(b)) / min(gaps))


def test_moving_average():
    s = make_series([0, 1, 2, 3], [1, 2, 3, 4])
    out = moving_average(s, 2)
    assert out.target.tolist() == [1.5, 2.5, 3.5]
    assert out.timestamps.tolist() == [1, 2, 3]
    assert moving_average(s, 1).equals(s)
    assert moving_average(s, 4).target.tolist() == [2.5]
    with pytest.raises(TooShort):
        moving_average(s, 5)


def test_align_nearest_preceding():
    s = make_series([0, 1, 2], [10, 20, 30])
    out = align_nearest_preceding(s, [0.5, 1.0, 2.9])
    assert out.target.tolist() == [10, 20, 30]
