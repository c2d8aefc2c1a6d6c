"""Scoring and statistics over experiment results."""

from __future__ import annotations

import csv
import io
import math
from collections import defaultdict
from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import rankdata

from .datasets import ViewSet
from .model import ParametricModel
from .optim import FitOptions, fit_views

CLIP = 5.0

RESULT_FIELDS = ("function", "run_mode", "noise", "max_size", "seed",
                 "n_params", "refit_mse", "expression")
HEATMAP_FIELDS = ("run_mode", "noise", "max_size", "mean_clipped_mse", "count")


@dataclass(frozen=True)
class ResultRecord:
    function: str
    run_mode: str
    noise: float
    max_size: int
    seed: int
    n_params: int
    refit_mse: float
    expression: str
    wall_time: float = 0.0

    def sort_key(self):
        return (self.function, self.run_mode, self.noise, self.max_size, self.seed)

    def row(self) -> dict:
        d = asdict(self)
        d.pop("wall_time")
        d["noise"] = _fmt(self.noise)
        d["refit_mse"] = _fmt(self.refit_mse)
        return d

    @classmethod
    def from_row(cls, row: dict) -> "ResultRecord":
        return cls(row["function"], row["run_mode"], float(row["noise"]),
                   int(row["max_size"]), int(row["seed"]), int(row["n_params"]),
                   float(row["refit_mse"]), row["expression"])


def _fmt(x: float) -> str:
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(float(x))


def refit_losses(model: ParametricModel, views: ViewSet,
                 options: FitOptions | None = None) -> list[float]:
    """Per-view MSE after refitting ``model`` to the noiseless version of each view.

    The fit starts from the model's stored parameters (all ones when it has
    none of the right length).
    """
    clean = views.noiseless()
    theta0 = model.initial_guess
    if len(theta0) != model.n_params or not np.all(np.isfinite(theta0)):
        theta0 = np.ones(model.n_params)
    return [f.loss for f in fit_views(model, clean.views, theta0, options)]


def refit_score(model: ParametricModel, views: ViewSet,
                options: FitOptions | None = None) -> float:
    """Mean of :func:`refit_losses`; any non-finite per-view loss gives ``+inf``."""
    losses = refit_losses(model, views, options)
    if not all(math.isfinite(v) for v in losses):
        return math.inf
    return math.fsum(losses) / len(losses)


def clip_score(x: float, clip: float = CLIP) -> float:
    if math.isnan(x) or x > clip:
        return clip
    return x


def heatmap_grid(records, clip: float = CLIP) -> list[dict]:
    """Mean clipped refit score per ``(run_mode, noise, max_size)`` cell."""
    cells = defaultdict(list)
    for r in records:
        cells[(r.run_mode, r.noise, r.max_size)].append(clip_score(r.refit_mse, clip))
    out = []
    for (mode, noise, size) in sorted(cells):
        vals = cells[(mode, noise, size)]
        out.append({"run_mode": mode, "noise": noise, "max_size": size,
                    "mean_clipped_mse": math.fsum(vals) / len(vals), "count": len(vals)})
    return out


def param_delta(n_model: int, n_true: int) -> int:
    return abs(int(n_model) - int(n_true))


@dataclass
class RankTable:
    methods: list
    deltas: np.ndarray      # methods x instances
    ranks: np.ndarray       # methods x instances, mid-ranks
    average_ranks: np.ndarray
    friedman_statistic: float

    def as_rows(self) -> list[dict]:
        return [{"method": m, "average_rank": float(r)}
                for m, r in zip(self.methods, self.average_ranks)]


def average_ranks(deltas, methods=None) -> RankTable:
    """Rank methods per instance (smaller delta ranks better, ties share).

    The Friedman statistic is
    ``12N / (k(k+1)) * sum_j R_j**2 - 3N(k+1)`` over ``k`` methods with
    average ranks ``R_j`` on ``N`` instances, without a tie correction.
    """
    D = np.asarray(deltas, dtype=float)
    if D.ndim != 2 or D.shape[0] < 2 or D.shape[1] < 2:
        raise ValueError("need at least 2 methods and 2 instances")
    k, N = D.shape
    ranks = np.apply_along_axis(rankdata, 0, D)
    R = ranks.mean(axis=1)
    chi2 = 12.0 * N / (k * (k + 1)) * float(np.sum(R**2)) - 3.0 * N * (k + 1)
    if abs(chi2) < 1e-9 * N * k:
        chi2 = 0.0
    methods = list(methods) if methods is not None else [f"m{i}" for i in range(k)]
    return RankTable(methods, D, ranks, R, chi2)


def rank_methods(records, n_true: dict) -> RankTable:
    """Rank run modes on ``|n_params - n_true|`` across shared instances.

    An instance is a ``(function, noise, max_size, seed)`` combination;
    only instances reported by every run mode are used.
    """
    by_mode = defaultdict(dict)
    for r in records:
        inst = (r.function, r.noise, r.max_size, r.seed)
        by_mode[r.run_mode][inst] = param_delta(r.n_params, n_true[r.function])
    methods = sorted(by_mode, key=_mode_order)
    common = set.intersection(*(set(v) for v in by_mode.values())) if by_mode else set()
    instances = sorted(common)
    D = [[by_mode[m][i] for i in instances] for m in methods]
    return average_ranks(D, methods)


def _mode_order(mode: str):
    return (0, mode) if mode == "mvsr" else (1, mode)


# ---------------------------------------------------------------------------
# CSV


def records_to_csv(records) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=RESULT_FIELDS, lineterminator="\n")
    w.writeheader()
    for r in sorted(records, key=ResultRecord.sort_key):
        w.writerow(r.row())
    return buf.getvalue()


def records_from_csv(text: str) -> list[ResultRecord]:
    return [ResultRecord.from_row(row) for row in csv.DictReader(io.StringIO(text))]


def heatmap_to_csv(cells) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=HEATMAP_FIELDS, lineterminator="\n")
    w.writeheader()
    for c in cells:
        w.writerow({**c, "noise": _fmt(c["noise"]),
                    "mean_clipped_mse": _fmt(c["mean_clipped_mse"])})
    return buf.getvalue()
