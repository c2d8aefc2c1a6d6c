"""Views: benchmark generators, noise, target scaling and CSV input."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

BENCHMARKS = ("f1_views", "f1_partial", "f2_views", "f3_views")

# Views 1-4: two coefficients zeroed per view, cycling over (theta0..theta3).
F1_VIEW_THETAS = (
    (2.0, 2.0, 0.0, 0.0),
    (0.0, 2.0, 2.0, 0.0),
    (0.0, 0.0, 2.0, 2.0),
    (2.0, 0.0, 0.0, 2.0),
)
F1_PARTIAL_THETA = (2.0, -2.0, 2.0, 2.0)
F1_PARTIAL_DOMAINS = ((-2.0, -1.0), (-1.0, 0.0), (0.0, 1.0), (1.0, 2.0))
VIEW_MASKS = ((1, 1, 0, 0), (0, 1, 1, 0), (0, 0, 1, 1), (1, 0, 0, 1))

F2_DEFAULT = (math.pi, 20.0, 0.5, 10.0)
F3_DEFAULT = (1.0, 1.0, 1.0, 1.0)

# number of free parameters of the generating family, scaling included
TRUE_N_PARAMS = {"f1_views": 4, "f1_partial": 4, "f2_views": 5, "f3_views": 5}


@dataclass(frozen=True, eq=False)
class Dataset:
    """One view: a ``p x m`` feature matrix and a length-``p`` target."""

    X: np.ndarray
    y: np.ndarray
    label: str = ""

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        y = np.asarray(self.y, dtype=float).reshape(-1)
        if X.ndim != 2 or X.shape[0] != y.shape[0]:
            raise ValueError(f"X has {X.shape[0]} rows but y has {y.shape[0]}")
        if y.shape[0] < 1:
            raise ValueError("a dataset needs at least one row")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True, eq=False)
class ViewSet:
    """Ordered views sharing one dimensionality.

    ``clean`` holds the noiseless (scaled) version of every view when it is
    known, and ``thetas`` the generating parameters; both are ``None`` for
    external data.
    """

    views: tuple
    generator: str = "external"
    noise: float = 0.0
    thetas: tuple | None = None
    clean: tuple | None = None

    def __post_init__(self):
        views = tuple(self.views)
        if not views:
            raise ValueError("a view set needs at least one view")
        m = views[0].n_features
        if any(v.n_features != m for v in views):
            raise ValueError("all views must have the same number of features")
        object.__setattr__(self, "views", views)
        if self.clean is not None:
            object.__setattr__(self, "clean", tuple(self.clean))

    def __len__(self):
        return len(self.views)

    def __iter__(self):
        return iter(self.views)

    def __getitem__(self, i):
        return self.views[i]

    @property
    def n_features(self) -> int:
        return self.views[0].n_features

    def noiseless(self) -> "ViewSet":
        """The views with their noiseless targets (self for external data)."""
        if self.clean is None:
            return self
        return ViewSet(self.clean, self.generator, 0.0, self.thetas, self.clean)

    def subset(self, indices) -> "ViewSet":
        idx = list(indices)
        return ViewSet(
            tuple(self.views[i] for i in idx),
            self.generator,
            self.noise,
            None if self.thetas is None else tuple(self.thetas[i] for i in idx),
            None if self.clean is None else tuple(self.clean[i] for i in idx),
        )


@dataclass(frozen=True)
class NoiseSpec:
    rate: float = 0.0
    seed: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.rate < 1.0:
            raise ValueError(f"noise rate must lie in [0, 1), got {self.rate}")


# ---------------------------------------------------------------------------
# generating functions


def f1(x, theta):
    t0, t1, t2, t3 = theta
    x = x[:, 0]
    return t0 + t1 * x + t2 * x**2 + t3 * x**3


def f2(x, theta):
    t0, t1, t2, t3 = theta
    return (np.sin(t0 * x[:, 0] * x[:, 1]) + t1 * (x[:, 2] - t2) ** 2
            + t3 * x[:, 3] + x[:, 4])


def f3(x, theta):
    t0, t1, t2, t3 = theta
    inner = t1 * x[:, 1] * x[:, 2] - t2 / (t3 * x[:, 1] * x[:, 3] + 1.0)
    return np.sqrt(t0 * x[:, 0] ** 2 + inner**2)


def _friedman_inputs(kind: str, n: int, rng: np.random.Generator) -> np.ndarray:
    if kind == "f2_views":
        return rng.uniform(0.0, 1.0, size=(n, 5))
    X = np.empty((n, 4))
    X[:, 0] = rng.uniform(0.0, 100.0, n)
    X[:, 1] = rng.uniform(40.0 * np.pi, 560.0 * np.pi, n)
    X[:, 2] = rng.uniform(0.0, 1.0, n)
    X[:, 3] = rng.uniform(1.0, 11.0, n)
    return X


def view_thetas(benchmark: str, base=None) -> tuple:
    """Generating parameters of the four views of a benchmark.

    ``base`` overrides the non-zero values for the Friedman-style benchmarks.
    """
    if benchmark == "f1_views":
        return F1_VIEW_THETAS
    if benchmark == "f1_partial":
        return (F1_PARTIAL_THETA,) * 4
    if benchmark not in ("f2_views", "f3_views"):
        raise ValueError(f"unknown benchmark {benchmark!r}; expected one of {BENCHMARKS}")
    if base is None:
        base = F2_DEFAULT if benchmark == "f2_views" else F3_DEFAULT
    return tuple(tuple(float(b) * m for b, m in zip(base, mask)) for mask in VIEW_MASKS)


def add_noise(y, spec: NoiseSpec, rng: np.random.Generator) -> np.ndarray:
    """Sample ``N(y, sigma_y * sqrt(rate / (1 - rate)))`` element-wise.

    ``sigma_y`` is the population standard deviation of ``y``.
    """
    y = np.asarray(y, dtype=float)
    if spec.rate == 0.0:
        return y.copy()
    sigma = float(np.std(y)) * math.sqrt(spec.rate / (1.0 - spec.rate))
    if sigma == 0.0:
        return y.copy()
    return y + rng.normal(0.0, sigma, size=y.shape)


def scale_target(y) -> np.ndarray:
    """Rescale so that ``max|y| == 10``."""
    y = np.asarray(y, dtype=float)
    peak = float(np.max(np.abs(y))) if y.size else 0.0
    if not peak > 0.0 or not math.isfinite(peak):
        raise ValueError("cannot scale a target whose maximum magnitude is zero")
    return 10.0 * y / peak


def generate_benchmark(benchmark: str, noise: NoiseSpec | float = 0.0, seed: int = 0,
                       theta_base=None) -> ViewSet:
    """Build the four views of a benchmark, noisy targets first, then scaled."""
    if not isinstance(noise, NoiseSpec):
        noise = NoiseSpec(float(noise), seed)
    thetas = view_thetas(benchmark, theta_base)
    streams = np.random.SeedSequence([int(seed), 104729]).spawn(len(thetas))
    views, clean = [], []
    for i, (theta, ss) in enumerate(zip(thetas, streams)):
        sample_rng, noise_rng = (np.random.default_rng(s) for s in ss.spawn(2))
        if benchmark == "f1_views":
            X = np.linspace(-2.0, 2.0, 20)[:, None]
            y = f1(X, theta)
        elif benchmark == "f1_partial":
            lo, hi = F1_PARTIAL_DOMAINS[i]
            X = np.linspace(lo, hi, 20)[:, None]
            y = f1(X, theta)
        else:
            X = _friedman_inputs(benchmark, 100, sample_rng)
            y = (f2 if benchmark == "f2_views" else f3)(X, theta)
        noisy = add_noise(y, noise, noise_rng)
        label = f"{benchmark}[{i + 1}]"
        views.append(Dataset(X, scale_target(noisy), label))
        clean.append(Dataset(X, scale_target(y), label))
    return ViewSet(tuple(views), benchmark, noise.rate, thetas, tuple(clean))


# ---------------------------------------------------------------------------
# CSV


def load_csv(path) -> Dataset:
    """Read a view from CSV with header ``x0,...,x{m-1},y``.

    Feature columns are ordered by their index, not by header position.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if r and any(c.strip() for c in r)]
    if not rows:
        raise ValueError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if "y" not in header:
        raise ValueError(f"{path}: missing 'y' column")
    features = sorted((h for h in header if h != "y"), key=_feature_index)
    expected = [f"x{i}" for i in range(len(features))]
    if features != expected:
        raise ValueError(f"{path}: feature columns must be x0..x{len(features) - 1}")
    if len(rows) < 2:
        raise ValueError(f"{path}: no data rows")
    cols = [header.index(f) for f in features]
    ycol = header.index("y")
    data = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise ValueError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
        try:
            values = [float(c) for c in row]
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: non-numeric cell") from exc
        if not all(math.isfinite(v) for v in values):
            raise ValueError(f"{path}:{lineno}: non-finite cell")
        data.append(values)
    arr = np.array(data, dtype=float)
    return Dataset(arr[:, cols].reshape(len(arr), len(cols)), arr[:, ycol], path.stem)


def _feature_index(name: str):
    if len(name) > 1 and name[0] == "x" and name[1:].isdigit():
        return (0, int(name[1:]))
    return (1, name)


def write_csv(data: Dataset, path) -> None:
    path = Path(path)
    m = data.n_features
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{i}" for i in range(m)] + ["y"])
        for xrow, yv in zip(data.X, data.y):
            w.writerow([repr(float(v)) for v in xrow] + [repr(float(yv))])


def load_views(paths) -> ViewSet:
    return ViewSet(tuple(load_csv(p) for p in paths))
