"""Weighted ensemble of P-blocks, each trained on a (span, rate) view of the series."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import pblock as pb
from .errors import PdecastError, SchemaError, WeightError
from .series import ResamplePlan, TimeSeries, resample

FORMAT = "pdecast.hybrid"
VERSION = 1


def normalize_weights(eps) -> np.ndarray:
    e = np.asarray(eps, dtype=float)
    if np.any(e < 0) or not np.all(np.isfinite(e)):
        raise WeightError(f"weights must be finite and non-negative: {e}")
    total = e.sum()
    if total <= 0:
        raise WeightError("weights sum to zero")
    return e / total


@dataclass
class HybridPde:
    components: list
    plans: list
    weights: np.ndarray

    def __post_init__(self):
        if not self.components or len(self.components) != len(self.plans):
            raise WeightError("need one plan per component and at least one component")
        self.weights = np.asarray(self.weights, dtype=float)
        if len(self.weights) != len(self.components) or abs(self.weights.sum() - 1.0) > 1e-9:
            raise WeightError(f"weights {self.weights} must have length h and sum to 1")
        orders = {c.lhs_order for c in self.components}
        if len(orders) != 1:
            raise SchemaError("components must share the left-hand-side order")

    @property
    def h(self) -> int:
        return len(self.components)

    @property
    def lhs_order(self) -> int:
        return self.components[0].lhs_order

    @property
    def names(self):
        return self.components[0].names

    @property
    def trained(self) -> bool:
        return all(c.trained for c in self.components)

    @property
    def window(self) -> int:
        return max((c.kernel_size - 1) * p.rate + 1 for c, p in zip(self.components, self.plans))

    def component_view(self, i: int, series: TimeSeries, index: int) -> TimeSeries:
        """The i-th component's resampled view of ``series[:index+1]``."""
        plan = self.plans[i]
        prefix = series.head(index + 1)
        need = (self.components[i].kernel_size - 1) * plan.rate + 1
        if prefix.m < need:
            raise IndexError(f"component {i} ({plan}) needs {need} samples up to index {index}, have {prefix.m}")
        # the span only limits training data; evaluation reads the newest
        # N strided points, so the view is cut there
        return resample(prefix, ResamplePlan(need, plan.rate))

    def component_values(self, series: TimeSeries, index: int) -> np.ndarray:
        if index < 0:
            index += series.m
        vals = np.empty(self.h)
        for i, comp in enumerate(self.components):
            view = self.component_view(i, series, index)
            vals[i] = comp.evaluate(view, view.m - 1)
        return vals

    def evaluate(self, series: TimeSeries, index: int) -> float:
        if index < 0:
            index += series.m
        total = 0.0
        for i, (comp, e) in enumerate(zip(self.components, self.weights)):
            if e == 0.0:
                continue
            view = self.component_view(i, series, index)
            total += e * comp.evaluate(view, view.m - 1)
        return total

    def dominant(self) -> int:
        return int(np.argmax(self.weights))


def evaluate_hybrid(model: HybridPde, series: TimeSeries, index: int) -> float:
    return model.evaluate(series, index)


def set_weights(model: HybridPde, eps) -> HybridPde:
    return HybridPde(list(model.components), list(model.plans), normalize_weights(eps))


class ComponentTrainingError(PdecastError):
    def __init__(self, message, plan):
        super().__init__(message)
        self.plan = plan


def train_component(block: pb.PBlock, series: TimeSeries, plan: ResamplePlan, config: pb.TrainConfig):
    try:
        view = resample(series, plan)
        return pb.train(block, view, config)
    except PdecastError as exc:
        raise ComponentTrainingError(f"training failed for {plan}: {exc}", plan) from exc


def train_hybrid(series: TimeSeries, plans, config: pb.TrainConfig, block_factory, workers: int = 1):
    """Train one block per plan; ``block_factory()`` returns a fresh untrained block.

    Returns ``(HybridPde, reports)`` with uniform weights.
    """
    plans = list(plans)
    if not plans:
        raise WeightError("at least one plan is required")
    for p in plans:
        p.validate(series.m)
    jobs = [(block_factory(), p) for p in plans]
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            results = list(ex.map(lambda j: train_component(j[0], series, j[1], config), jobs))
    else:
        results = [train_component(b, series, p, config) for b, p in jobs]
    comps = [r[0] for r in results]
    reports = [r[1] for r in results]
    h = len(plans)
    return HybridPde(comps, plans, np.full(h, 1.0 / h)), reports


def to_dict(model: HybridPde) -> dict:
    return {
        "format": FORMAT,
        "version": VERSION,
        "weights": [float(w) for w in model.weights],
        "plans": [{"span": p.span, "rate": p.rate} for p in model.plans],
        "components": [pb.to_dict(c) for c in model.components],
    }


def from_dict(d: dict) -> HybridPde:
    if d.get("format") != FORMAT or d.get("version") != VERSION:
        raise SchemaError(f"not a hybrid document (format={d.get('format')!r}, version={d.get('version')!r})")
    return HybridPde(
        [pb.from_dict(c) for c in d["components"]],
        [ResamplePlan(p["span"], p["rate"]) for p in d["plans"]],
        np.array(d["weights"], dtype=float),
    )
