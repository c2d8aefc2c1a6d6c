"""Experiment configuration and batch execution."""

from __future__ import annotations

import dataclasses
import json
import logging
import math
import os
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .analysis import (ResultRecord, heatmap_grid, heatmap_to_csv,
                       records_to_csv, refit_score)
from .datasets import BENCHMARKS, generate_benchmark, load_views
from .gp import DEFAULT_OPERATORS, GpConfig, evolve
from .mveval import AggregationKind
from .optim import FitOptions

log = logging.getLogger(__name__)

FULL_GRID_NOISES = (0.0, 0.033, 0.066, 0.1)
FULL_GRID_SIZES = tuple(range(5, 26, 2))


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass
class ExperimentConfig:
    benchmark: str | None = "f1_views"
    data: list | None = None
    noise: float = 0.0
    max_size: int = 15
    population_size: int = 1000
    pool_size: int = 5
    crossover_probability: float = 1.0
    mutation_probability: float = 0.25
    max_depth: int = 10
    evaluation_budget: int = 200_000
    operators: list | None = None
    inner_iterations: int = 100
    final_iterations: int = 100
    target_score: float | None = None
    aggregation: str = "max"
    run_mode: str | list = "mvsr"
    seeds: list = field(default_factory=lambda: [0])
    output_dir: str = "results"
    theta_base: list | None = None
    param_bounds: list | None = None
    jobs: int = 1

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ConfigError(f"unknown config field(s): {', '.join(unknown)}")
        cfg = cls(**data)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: expected a JSON object")
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def validate(self) -> None:
        if self.data:
            missing = [p for p in self.data if not Path(p).is_file()]
            if missing:
                raise ConfigError(f"missing data file(s): {', '.join(map(str, missing))}")
        elif self.benchmark not in BENCHMARKS:
            raise ConfigError(f"unknown benchmark {self.benchmark!r}; expected one of {BENCHMARKS}")
        if not self.seeds:
            raise ConfigError("seeds must not be empty")
        if not 0.0 <= float(self.noise) < 1.0:
            raise ConfigError("noise must lie in [0, 1)")
        if self.param_bounds is not None:
            lo, hi = self.param_bounds
            if not lo < hi:
                raise ConfigError("param_bounds must satisfy l < u")
        try:
            AggregationKind.parse(self.aggregation)
        except ValueError as exc:
            raise ConfigError(f"unknown aggregation {self.aggregation!r}") from exc
        try:
            self.gp_config(0)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        for mode in self.modes(4):
            _parse_mode(mode)
        if self.jobs < 1:
            raise ConfigError("jobs must be at least 1")

    def default_operators(self) -> tuple:
        if self.operators:
            return tuple(self.operators)
        if self.benchmark == "f2_views" and not self.data:
            return DEFAULT_OPERATORS + ("sin",)
        return DEFAULT_OPERATORS

    def gp_config(self, seed: int) -> GpConfig:
        return GpConfig(
            population_size=self.population_size, pool_size=self.pool_size,
            crossover_probability=self.crossover_probability,
            mutation_probability=self.mutation_probability, max_depth=self.max_depth,
            max_size=self.max_size, evaluation_budget=self.evaluation_budget,
            operators=self.default_operators(), inner_iterations=self.inner_iterations,
            final_iterations=self.final_iterations, target_score=self.target_score,
            seed=int(seed))

    def modes(self, n_views: int) -> list[str]:
        """Expand ``run_mode`` into concrete modes ``mvsr`` / ``single_view(i)``."""
        raw = self.run_mode if isinstance(self.run_mode, list) else [self.run_mode]
        out: list[str] = []
        for m in raw:
            if m in ("all_single_views", "all"):
                if m == "all":
                    out.append("mvsr")
                out += [f"single_view({i})" for i in range(1, n_views + 1)]
            else:
                out.append(_canonical_mode(m))
        return out


def _canonical_mode(mode: str) -> str:
    mode = str(mode).strip()
    if mode == "mvsr":
        return mode
    for prefix in ("single_view(", "single_view:", "single_view_"):
        if mode.startswith(prefix):
            idx = mode[len(prefix):].rstrip(")")
            if idx.isdigit() and int(idx) >= 1:
                return f"single_view({int(idx)})"
    raise ConfigError(f"unknown run mode {mode!r}")


def _parse_mode(mode: str):
    """``None`` for mvsr, else the 0-based view index."""
    mode = _canonical_mode(mode)
    if mode == "mvsr":
        return None
    return int(mode[len("single_view("):-1]) - 1


def build_views(cfg: ExperimentConfig, seed: int):
    if cfg.data:
        return load_views(cfg.data)
    return generate_benchmark(cfg.benchmark, cfg.noise, seed, cfg.theta_base)


@dataclass(frozen=True)
class _Task:
    cfg: ExperimentConfig
    mode: str
    seed: int


def _run_task(task: _Task) -> ResultRecord:
    cfg, seed = task.cfg, task.seed
    start = time.perf_counter()
    views = build_views(cfg, seed)
    idx = _parse_mode(task.mode)
    if idx is not None and idx >= len(views):
        raise ConfigError(f"{task.mode}: only {len(views)} view(s) available")
    train = views if idx is None else views.subset([idx])
    result = evolve(cfg.gp_config(seed), train, AggregationKind.parse(cfg.aggregation))
    # external data has no noiseless version: score against the inputs
    score = refit_score(result.model, views, FitOptions(max_iterations=cfg.final_iterations))
    return ResultRecord(
        function=cfg.benchmark if not cfg.data else "external",
        run_mode=task.mode, noise=float(cfg.noise), max_size=int(cfg.max_size),
        seed=int(seed), n_params=result.model.n_params, refit_mse=score,
        expression=str(result.model), wall_time=time.perf_counter() - start)


def _tasks(cfg: ExperimentConfig) -> list[_Task]:
    n_views = len(cfg.data) if cfg.data else 4
    return [_Task(cfg, mode, int(seed)) for seed in cfg.seeds for mode in cfg.modes(n_views)]


def _execute(tasks, jobs: int) -> list[ResultRecord]:
    if jobs <= 1 or len(tasks) <= 1:
        records = [_run_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_run_task, tasks))
    return sorted(records, key=ResultRecord.sort_key)


def run_experiment(cfg: ExperimentConfig, jobs: int | None = None) -> list[ResultRecord]:
    """Every (seed, run mode) combination of ``cfg``, in canonical order."""
    cfg.validate()
    return _execute(_tasks(cfg), jobs or cfg.jobs)


def sweep(cfg: ExperimentConfig, noises, sizes, jobs: int | None = None) -> list[ResultRecord]:
    """Run ``cfg`` over the cross product of noise rates and max sizes."""
    noises, sizes = list(noises), list(sizes)
    if not noises or not sizes:
        raise ConfigError("noise and size lists must not be empty")
    tasks = []
    for noise in noises:
        for size in sizes:
            cell = dataclasses.replace(cfg, noise=float(noise), max_size=int(size))
            cell.validate()
            tasks += _tasks(cell)
    return _execute(tasks, jobs or cfg.jobs)


def write_atomic(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_results(records, out_dir, heatmap: bool = False) -> list[Path]:
    out_dir = Path(out_dir)
    paths = [out_dir / "results.csv"]
    write_atomic(paths[0], records_to_csv(records))
    if heatmap:
        paths.append(out_dir / "heatmap.csv")
        write_atomic(paths[1], heatmap_to_csv(heatmap_grid(records)))
    return paths


def parse_sizes(text: str) -> list[int]:
    """``"5:25:2"`` (inclusive range) or ``"5,7,9"``."""
    text = text.strip()
    if ":" in text:
        parts = [int(p) for p in text.split(":")]
        if len(parts) not in (2, 3):
            raise ConfigError(f"bad size range {text!r}")
        lo, hi = parts[0], parts[1]
        step = parts[2] if len(parts) == 3 else 1
        if step < 1:
            raise ConfigError("size step must be positive")
        return list(range(lo, hi + 1, step))
    return [int(p) for p in text.split(",") if p.strip()]


def parse_floats(text: str) -> list[float]:
    vals = [float(p) for p in text.split(",") if p.strip()]
    if not all(math.isfinite(v) for v in vals):
        raise ConfigError("values must be finite")
    return vals
