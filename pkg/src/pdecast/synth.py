"""Synthetic datasets: a wave-equation trajectory and a regime-switch fixture.

The wave data follows the double-sine series solution of
``u_tt = u_x1x1 + u_x2x2`` sampled along the path ``x1 = cos(t)^2``,
``x2 = sin(t)^2``. Because the path is one-dimensional, any discovery run
on it has to use the second-order time derivative as the left-hand side.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .series import TimeSeries


@dataclass(frozen=True)
class WaveConfig:
    n_points: int = 1000
    t_min: float = 0.0
    t_max: float = 10.0
    k_max: int = 40
    seed: int | None = None
    noise: float = 0.0

    def validate(self):
        if self.n_points < 2:
            raise ConfigError(f"n_points must be >= 2, got {self.n_points}")
        if not self.t_min < self.t_max:
            raise ConfigError("t_min must be smaller than t_max")
        if self.k_max < 1:
            raise ConfigError("k_max must be >= 1")
        if self.noise < 0:
            raise ConfigError("noise must be non-negative")


def _odd_modes(k_max):
    k = np.arange(1, k_max + 1)
    coef = ((-1.0) ** k - 1.0) / k**3
    return k, coef


def wave_field(x1, x2, t, k_max: int = 40):
    """Evaluate the series solution at arbitrary (x1, x2, t); broadcasts."""
    x1, x2, t = np.broadcast_arrays(np.asarray(x1, float), np.asarray(x2, float), np.asarray(t, float))
    k, ck = _odd_modes(k_max)
    keep = ck != 0
    k, ck = k[keep], ck[keep]
    out = np.zeros(x1.shape)
    s1 = np.sin(np.pi * np.multiply.outer(x1, k))
    s2 = np.sin(np.pi * np.multiply.outer(x2, k))
    for a, (kk, ca) in enumerate(zip(k, ck)):
        omega = np.pi * np.sqrt(kk**2 + k**2)
        temporal = np.cos(np.multiply.outer(t, omega))
        out += ca * s1[..., a] * np.sum(ck * s2 * temporal, axis=-1)
    return 16.0 / np.pi**2 * out


def wave_bound(k_max: int = 40) -> float:
    _, ck = _odd_modes(k_max)
    return 16.0 / np.pi**2 * np.sum(np.abs(ck)) ** 2


def generate_wave(config: WaveConfig = WaveConfig()) -> TimeSeries:
    config.validate()
    t = np.linspace(config.t_min, config.t_max, config.n_points)
    x1 = np.abs(np.cos(t)) ** 2
    x2 = np.abs(np.sin(t)) ** 2
    y = wave_field(x1, x2, t, config.k_max)
    if config.noise > 0:
        rng = np.random.default_rng(config.seed)
        y = y + rng.normal(0.0, config.noise, size=y.shape)
    return TimeSeries(t, y, np.vstack([x1, x2]), ("y", "x1", "x2"))


@dataclass(frozen=True)
class RegimeConfig:
    """Series with ``dy/dt = a(t) dx/dt`` where ``a`` flips sign at the midpoint.

    ``a(t) = -amplitude * tanh((t - t_mid) / width)``; a small width gives an
    abrupt flip, a large one a drifting transition that continues past the
    training split.
    """

    n_points: int = 600
    t_max: float = 30.0
    amplitude: float = 1.0
    width: float = 7.5
    omega: float = 2.0
    offset: float = 3.0
    noise: float = 0.0
    seed: int = 0


def regime_coefficient(t, config: RegimeConfig):
    t_mid = 0.5 * config.t_max
    return -config.amplitude * np.tanh((np.asarray(t) - t_mid) / config.width)


def generate_regime_switch(config: RegimeConfig = RegimeConfig()) -> TimeSeries:
    t = np.linspace(0.0, config.t_max, config.n_points)
    x = np.sin(config.omega * t)
    # integrate y' = a(t) x'(t) on a 20x finer grid with the trapezoid rule
    fine = np.linspace(0.0, config.t_max, 20 * (config.n_points - 1) + 1)
    rate = regime_coefficient(fine, config) * config.omega * np.cos(config.omega * fine)
    acc = np.concatenate([[0.0], np.cumsum(0.5 * (rate[1:] + rate[:-1]) * np.diff(fine))])
    y = config.offset + acc[::20]
    if config.noise > 0:
        rng = np.random.default_rng(config.seed)
        y = y + rng.normal(0.0, config.noise, size=y.shape)
    return TimeSeries(t, y, x[None, :], ("y", "x"))
