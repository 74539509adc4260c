"""Run configuration shared by the command-line tools."""
from __future__ import annotations

from dataclasses import dataclass, fields, replace

from .errors import ConfigError
from .forecaster import HOLD_LAST, MULTI, PROVIDED, SINGLE
from .metactrl import MetaConfig
from .pblock import TrainConfig


@dataclass(frozen=True)
class RunConfig:
    target: str = "y"
    kernel_size: int = 5
    n_channels: int = 6
    n_layers: int = 2
    terms: tuple = ()  # explicit ASCII terms, overrides the random structure
    time_gate_p: float = 0.5
    lam: float = 0.02
    fista_iters: int = 2000
    learning_rate: float = 1e-2
    epochs: int = 20
    lhs_order: int = 1
    spans: tuple = (1.0, 0.5, 0.25)
    rates: tuple = (1, 2)
    eps_grid: str = "default"
    hidden_dim: int = 16
    window: int = 64
    anchor_stride: int = 10
    bucket: int = 50
    eval_window: int = 10
    meta_steps: int = 300
    verbatim_alg1: bool = False
    horizon: int = 50
    mode: str = MULTI
    covariate_policy: str = HOLD_LAST
    seed: int = 0
    split: tuple = (0.7, 0.1, 0.2)
    grid_lams: tuple = (0.005, 0.02, 0.05)
    grid_lrs: tuple = (1e-2, 3e-3, 1e-3)
    workers: int = 1

    def validate(self):
        positive = ("kernel_size", "n_channels", "n_layers", "fista_iters", "hidden_dim", "window",
                    "anchor_stride", "bucket", "eval_window", "horizon", "workers")
        for name in positive:
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.kernel_size < 3 or self.kernel_size % 2 == 0:
            raise ConfigError("kernel_size must be odd and at least 3")
        if self.lhs_order not in (1, 2):
            raise ConfigError("lhs_order must be 1 or 2")
        if self.lam < 0 or self.learning_rate <= 0 or self.epochs < 0:
            raise ConfigError("lam and epochs must be non-negative, learning_rate positive")
        if not self.spans or not self.rates or min(self.spans) <= 0 or max(self.spans) > 1 or min(self.rates) < 1:
            raise ConfigError("spans must be fractions in (0, 1] and rates positive integers")
        if self.mode not in (SINGLE, MULTI) or self.covariate_policy not in (HOLD_LAST, PROVIDED):
            raise ConfigError(f"bad mode/covariate policy {self.mode}/{self.covariate_policy}")
        if self.eps_grid not in ("default", "unit"):
            raise ConfigError("eps_grid must be 'default' or 'unit'")
        if len(self.split) != 3 or min(self.split) <= 0 or abs(sum(self.split) - 1) > 1e-9:
            raise ConfigError(f"split must be three positive fractions summing to 1: {self.split}")
        return self

    def train_config(self) -> TrainConfig:
        return TrainConfig(lam=self.lam, epochs=self.epochs, learning_rate=self.learning_rate,
                           fista_iters=self.fista_iters, seed=self.seed)

    def meta_config(self) -> MetaConfig:
        return MetaConfig(hidden_dim=self.hidden_dim, window=self.window, anchor_stride=self.anchor_stride,
                          eval_window=self.eval_window, bucket=self.bucket, final_steps=self.meta_steps,
                          verbatim_alg1=self.verbatim_alg1, seed=self.seed)


_FIELDS = {f.name: f for f in fields(RunConfig)}
_DEFAULTS = RunConfig()


def _coerce(name: str, text: str):
    default = getattr(_DEFAULTS, name)
    try:
        if isinstance(default, bool):
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if isinstance(default, tuple):
            items = [s.strip() for s in text.split(",") if s.strip()]
            if name == "terms":
                return tuple(items)
            cast = int if name == "rates" else float
            return tuple(cast(s) for s in items)
        return type(default)(text)
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {text!r}") from exc


def parse_overrides(pairs) -> dict:
    """``key=value`` strings (kebab or snake case) to typed field values."""
    out = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"expected key=value, got {pair!r}")
        key, value = (s.strip() for s in pair.split("=", 1))
        name = key.replace("-", "_")
        if name not in _FIELDS:
            raise ConfigError(f"unknown config key {key!r}")
        out[name] = _coerce(name, value)
    return out


def load_config(path) -> dict:
    lines = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                lines.append(parse_overrides([line]))
            except ConfigError as exc:
                raise ConfigError(f"{path}:{lineno}: {exc}") from exc
    merged = {}
    for d in lines:
        merged.update(d)
    return merged


def build_config(file_values: dict | None = None, flag_values: dict | None = None) -> RunConfig:
    """Defaults, then file values, then flags (``None`` flags are ignored)."""
    cfg = replace(_DEFAULTS, **(file_values or {}))
    flags = {k: v for k, v in (flag_values or {}).items() if v is not None and k in _FIELDS}
    return replace(cfg, **flags).validate()
