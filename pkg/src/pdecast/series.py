"""Time series container plus ingestion, resampling, differencing and splitting."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import IngestError, ParseError, PlanError, TooShort, UnsupportedOrder


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """One target channel and ``k`` covariate channels on a shared time axis.

    ``covariates`` has shape ``(k, m)``. ``names`` holds ``k + 1`` labels, the
    target label first.
    """

    timestamps: np.ndarray
    target: np.ndarray
    covariates: np.ndarray
    names: tuple

    def __post_init__(self):
        t = _frozen(self.timestamps)
        y = _frozen(self.target)
        x = np.array(self.covariates, dtype=float)
        if x.ndim == 1:
            x = x[None, :] if x.size else x.reshape(0, len(t))
        x.setflags(write=False)
        object.__setattr__(self, "timestamps", t)
        object.__setattr__(self, "target", y)
        object.__setattr__(self, "covariates", x)
        names = tuple(self.names) if self.names else default_names(x.shape[0])
        object.__setattr__(self, "names", names)

        m = len(t)
        if y.shape != (m,) or x.shape[1:] != (m,):
            raise IngestError(f"channel lengths differ: t={m}, y={y.shape}, x={x.shape}")
        if len(names) != x.shape[0] + 1:
            raise IngestError(f"expected {x.shape[0] + 1} channel names, got {len(names)}")
        if m < 1:
            raise TooShort("series is empty")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(y)) and np.all(np.isfinite(x))):
            raise IngestError("non-finite values in series")
        if np.any(np.diff(t) <= 0):
            raise IngestError("timestamps must be strictly increasing")

    @property
    def m(self) -> int:
        return len(self.timestamps)

    @property
    def k(self) -> int:
        return self.covariates.shape[0]

    def __len__(self):
        return self.m

    def channel(self, index: int) -> np.ndarray:
        """Channel 0 is the target, 1..k the covariates."""
        return self.target if index == 0 else self.covariates[index - 1]

    def take(self, indices) -> "TimeSeries":
        idx = np.asarray(indices, dtype=int)
        return TimeSeries(self.timestamps[idx], self.target[idx], self.covariates[:, idx], self.names)

    def head(self, stop: int) -> "TimeSeries":
        """Prefix ending just before ``stop``."""
        return TimeSeries(self.timestamps[:stop], self.target[:stop], self.covariates[:, :stop], self.names)

    def segment(self, start: int, stop: int) -> "TimeSeries":
        return TimeSeries(
            self.timestamps[start:stop], self.target[start:stop], self.covariates[:, start:stop], self.names
        )

    def append(self, time: float, target: float, covariates) -> "TimeSeries":
        cov = np.asarray(covariates, dtype=float).reshape(self.k, 1)
        return TimeSeries(
            np.append(self.timestamps, time),
            np.append(self.target, target),
            np.hstack([self.covariates, cov]),
            self.names,
        )

    def concat(self, other: "TimeSeries") -> "TimeSeries":
        return TimeSeries(
            np.concatenate([self.timestamps, other.timestamps]),
            np.concatenate([self.target, other.target]),
            np.hstack([self.covariates, other.covariates]),
            self.names,
        )

    def equals(self, other: "TimeSeries") -> bool:
        return (
            self.names == other.names
            and np.array_equal(self.timestamps, other.timestamps)
            and np.array_equal(self.target, other.target)
            and np.array_equal(self.covariates, other.covariates)
        )

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(("time",) + self.names)
            for i in range(self.m):
                w.writerow([repr(float(self.timestamps[i])), repr(float(self.target[i]))]
                           + [repr(float(v)) for v in self.covariates[:, i]])


def default_names(k: int) -> tuple:
    if k == 1:
        return ("y", "x")
    return ("y",) + tuple(f"x{j}" for j in range(1, k + 1))


@dataclass(frozen=True)
class ResamplePlan:
    span: int
    rate: int = 1

    def validate(self, m: int) -> None:
        if self.span < 1 or self.rate < 1:
            raise PlanError(f"span and rate must be positive: {self}")
        if self.span > m:
            raise PlanError(f"span {self.span} exceeds series length {m}")
        if self.span / self.rate < 2:
            raise PlanError(f"span/rate < 2 leaves fewer than two points: {self}")

    def indices(self, m: int) -> np.ndarray:
        self.validate(m)
        return np.arange(m - 1, m - self.span - 1, -self.rate)[::-1]

    def clipped(self, m: int) -> "ResamplePlan":
        """Same plan with the span shortened to fit a series of length ``m``."""
        return self if self.span <= m else ResamplePlan(m, self.rate)


def load_csv(path, target_column: str) -> TimeSeries:
    path = Path(path)
    if not path.exists():
        raise IngestError(f"{path}: no such file")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise IngestError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if "time" not in header:
        raise IngestError(f"{path}: missing 'time' column")
    if target_column not in header:
        raise IngestError(f"{path}: missing target column {target_column!r}")
    cov_cols = [h for h in header if h not in ("time", target_column)]

    data = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ParseError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
        try:
            data.append([float(c) for c in row])
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: {exc}") from None
    if len(data) < 2:
        raise TooShort(f"{path}: need at least 2 rows, got {len(data)}")
    arr = np.array(data)
    if not np.all(np.isfinite(arr)):
        raise IngestError(f"{path}: non-finite value")

    col = {h: i for i, h in enumerate(header)}
    order = np.argsort(arr[:, col["time"]], kind="stable")
    arr = arr[order]
    t = arr[:, col["time"]]
    if np.any(np.diff(t) == 0):
        raise IngestError(f"{path}: duplicate time values")
    x = np.array([arr[:, col[c]] for c in cov_cols]).reshape(len(cov_cols), len(t))
    return TimeSeries(t, arr[:, col[target_column]], x, (target_column, *cov_cols))


def resample(series: TimeSeries, plan: ResamplePlan) -> TimeSeries:
    """Trailing window of ``plan.span`` points, strided by ``plan.rate`` from the newest point."""
    return series.take(plan.indices(series.m))


def split(series: TimeSeries, ratios=(0.7, 0.1, 0.2)):
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or min(ratios) <= 0 or abs(sum(ratios) - 1.0) > 1e-9:
        raise PlanError(f"split ratios must be three positive fractions summing to 1: {ratios}")
    m = series.m
    n_val = math.floor(m * ratios[1])
    n_test = math.floor(m * ratios[2])
    n_train = m - n_val - n_test
    sizes = (n_train, n_val, n_test)
    if min(sizes) < 2:
        raise TooShort(f"split of {m} points gives degenerate segment sizes {sizes}")
    a, b = n_train, n_train + n_val
    return series.segment(0, a), series.segment(a, b), series.segment(b, m)


def split_sizes(m: int, ratios=(0.7, 0.1, 0.2)):
    n_val = math.floor(m * ratios[1])
    n_test = math.floor(m * ratios[2])
    return m - n_val - n_test, n_val, n_test


def time_derivative(values, t, order: int) -> np.ndarray:
    """Forward first differences (left-aligned) or three-point second differences."""
    y = np.asarray(values, dtype=float)
    t = np.asarray(t, dtype=float)
    if order == 1:
        if len(y) < 2:
            raise TooShort("first difference needs 2 points")
        return np.diff(y) / np.diff(t)
    if order == 2:
        if len(y) < 3:
            raise TooShort("second difference needs 3 points")
        h0 = t[1:-1] - t[:-2]
        h1 = t[2:] - t[1:-1]
        return 2.0 * (h0 * y[2:] - (h0 + h1) * y[1:-1] + h1 * y[:-2]) / (h0 * h1 * (h0 + h1))
    raise UnsupportedOrder(f"time derivative order must be 1 or 2, got {order}")


def finite_diff_time(series: TimeSeries, order: int) -> np.ndarray:
    return time_derivative(series.target, series.timestamps, order)


def moving_average(series: TimeSeries, window: int) -> TimeSeries:
    if window < 1:
        raise PlanError("window must be positive")
    if window > series.m:
        raise TooShort(f"window {window} exceeds series length {series.m}")
    kernel = np.full(window, 1.0 / window)

    def smooth(v):
        return np.convolve(v, kernel, mode="valid")

    x = np.array([smooth(c) for c in series.covariates]).reshape(series.k, series.m - window + 1)
    return TimeSeries(series.timestamps[window - 1:], smooth(series.target), x, series.names)


def align_nearest_preceding(series: TimeSeries, times) -> TimeSeries:
    """Re-sample onto ``times`` using the latest observation at or before each time.

    Times earlier than the first observation are dropped.
    """
    times = np.asarray(times, dtype=float)
    idx = np.searchsorted(series.timestamps, times, side="right") - 1
    keep = idx >= 0
    picked = series.take(idx[keep])
    return TimeSeries(times[keep], picked.target, picked.covariates, series.names)
