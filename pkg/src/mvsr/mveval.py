"""Multi-view fitness: refit a candidate on every view, aggregate the losses."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .datasets import ViewSet
from .expr import Node, max_var_index
from .model import ParametricModel, parameterize
from .optim import FitOptions, FitResult, fit_views


class AggregationKind(str, enum.Enum):
    MAX = "max"
    AVERAGE = "average"
    MEDIAN = "median"
    MIN = "min"
    HARMONIC_MEAN = "harmonic_mean"

    @classmethod
    def parse(cls, value) -> "AggregationKind":
        if isinstance(value, cls):
            return value
        aliases = {"avg": "average", "mean": "average", "med": "median",
                   "harmonic": "harmonic_mean", "hmean": "harmonic_mean"}
        value = str(value).lower()
        return cls(aliases.get(value, value))


def aggregate(losses, kind=AggregationKind.MAX) -> float:
    """Combine per-view losses; any non-finite loss gives ``+inf``."""
    kind = AggregationKind.parse(kind)
    values = [float(v) for v in losses]
    if not values:
        raise ValueError("cannot aggregate an empty list of losses")
    if not all(math.isfinite(v) for v in values):
        return math.inf
    if kind is AggregationKind.MAX:
        return max(values)
    if kind is AggregationKind.MIN:
        return min(values)
    if kind is AggregationKind.AVERAGE:
        return math.fsum(values) / len(values)
    if kind is AggregationKind.MEDIAN:
        return float(np.median(values))
    # harmonic mean; a zero loss dominates
    if any(v == 0.0 for v in values):
        return 0.0
    return len(values) / math.fsum(1.0 / v for v in values)


@dataclass
class MultiViewScore:
    aggregated: float
    per_view: list
    model: ParametricModel

    @property
    def losses(self) -> list[float]:
        return [f.loss for f in self.per_view]

    @property
    def last_view_model(self) -> ParametricModel:
        """The skeleton carrying the parameters fitted on the last view."""
        if not self.per_view or not self.per_view[-1].finite:
            return self.model
        return self.model.with_guess(self.per_view[-1].theta)


def evaluate_multiview(expr: Node | ParametricModel, views: ViewSet,
                       kind=AggregationKind.MAX,
                       options: FitOptions | None = None) -> MultiViewScore:
    """Fit ``expr`` independently on each view and aggregate the MSEs.

    A plain expression is simplified and its constants become the shared
    starting point of every view's fit.
    """
    model = expr if isinstance(expr, ParametricModel) else parameterize(expr)
    if max_var_index(model.skeleton) >= views.n_features:
        raise ValueError(
            f"expression uses x{max_var_index(model.skeleton)} but views have "
            f"{views.n_features} feature(s)")
    fits: list[FitResult] = fit_views(model, views.views, model.initial_guess, options)
    return MultiViewScore(aggregate([f.loss for f in fits], kind), fits, model)
