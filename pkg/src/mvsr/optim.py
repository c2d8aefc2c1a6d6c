"""Levenberg-Marquardt least squares for parametric models.

Residuals, Jacobians and the LM iterations run in compiled code (see
``kernels``); this module holds the result types and the dataset checks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .datasets import Dataset
from .expr import max_var_index
from .model import ParametricModel

DEFAULT_MAX_ITERATIONS = 100
DEFAULT_TOLERANCE = 1e-10

LAMBDA0 = 1e-3
LAMBDA_MAX = 1e16


@dataclass
class FitResult:
    theta: np.ndarray
    loss: float
    iterations: int = 0
    converged: bool = False
    finite: bool = True
    losses: list = field(default_factory=list, repr=False)


@dataclass(frozen=True)
class FitOptions:
    max_iterations: int = DEFAULT_MAX_ITERATIONS
    tolerance: float = DEFAULT_TOLERANCE


def _check(model: ParametricModel, views):
    top = max_var_index(model.skeleton)
    for data in views:
        if top >= data.n_features:
            raise ValueError(f"model uses x{top} but data has {data.n_features} feature(s)")


def _theta(model, theta):
    theta = np.ascontiguousarray(theta, dtype=float).reshape(-1)
    if len(theta) != model.n_params:
        raise ValueError(f"expected {model.n_params} parameter value(s), got {len(theta)}")
    return theta


def mse(model: ParametricModel, theta, data: Dataset) -> float:
    """Mean squared error of ``model`` at ``theta``; NaN if any prediction is."""
    theta = _theta(model, theta)
    _check(model, [data])
    codes, args, consts = kernels.compile_program(model.skeleton)
    return float(kernels.mse_kernel(codes, args, consts, data.X, data.y, theta))


def lm_fit(model: ParametricModel, data: Dataset, theta0=None,
           options: FitOptions | None = None) -> FitResult:
    """Fit ``model`` to one dataset starting from ``theta0``.

    For a model without parameters this is just the MSE, reported as
    converged.
    """
    return fit_views(model, [data], theta0, options)[0]


def fit_views(model: ParametricModel, views, theta0=None,
              options: FitOptions | None = None) -> list[FitResult]:
    """Independent LM fits of ``model`` on every view, from a shared start.

    Numerical trouble never raises: a non-finite loss at the start gives
    ``finite=False``, and non-finite trial points count as rejected steps.
    """
    options = options or FitOptions()
    views = list(views)
    _check(model, views)
    theta0 = _theta(model, model.initial_guess if theta0 is None else theta0)
    n = model.n_params
    codes, args, consts = kernels.compile_program(model.skeleton)
    k = len(views)
    if n == 0:
        out = []
        for v in views:
            loss = float(kernels.mse_kernel(codes, args, consts, v.X, v.y, theta0))
            out.append(FitResult(np.zeros(0), loss, 0, True, bool(np.isfinite(loss)), [loss]))
        return out

    X, y, offsets = _stack(views)
    thetas = np.empty((k, n))
    losses = np.empty(k)
    iters = np.empty(k, dtype=np.int64)
    statuses = np.empty(k, dtype=np.int64)
    histories = np.empty((k, options.max_iterations + 1))
    n_hist = np.empty(k, dtype=np.int64)
    kernels.lm_views(codes, args, consts, X, y, offsets, theta0,
                     int(options.max_iterations), float(options.tolerance),
                     LAMBDA0, LAMBDA_MAX, thetas, losses, iters, statuses,
                     histories, n_hist)
    out = []
    for i in range(k):
        fin = bool(np.isfinite(losses[i]))
        out.append(FitResult(thetas[i].copy(), float(losses[i]), int(iters[i]),
                             fin and statuses[i] == kernels.STATUS_CONVERGED, fin,
                             histories[i, :n_hist[i]].tolist()))
    return out


_STACK_CACHE: dict = {}


def _stack(views):
    """Concatenated rows of ``views`` plus block offsets (memoized per tuple)."""
    key = tuple(id(v) for v in views)
    hit = _STACK_CACHE.get(key)
    if hit is not None and all(a is b for a, b in zip(hit[0], views)):
        return hit[1]
    counts = [v.n_rows for v in views]
    offsets = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    X = np.ascontiguousarray(np.vstack([v.X for v in views]))
    y = np.ascontiguousarray(np.concatenate([v.y for v in views]))
    if len(_STACK_CACHE) > 64:
        _STACK_CACHE.clear()
    _STACK_CACHE[key] = (tuple(views), (X, y, offsets))
    return X, y, offsets
