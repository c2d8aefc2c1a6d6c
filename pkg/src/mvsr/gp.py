"""Tree-based genetic programming driven by the multi-view fitness."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .datasets import ViewSet
from .expr import (BINARY_OPS, UNARY_OPS, Binary, Const, Node, Unary, Var,
                   get_subtree, iter_nodes, replace_subtree, size_and_depth,
                   subtree_paths)
from .model import ParametricModel
from .mveval import AggregationKind, MultiViewScore, evaluate_multiview
from .optim import FitOptions

log = logging.getLogger(__name__)

DEFAULT_OPERATORS = ("add", "sub", "mul", "div", "square", "exp", "sqrt")
_MAX_RETRIES = 16


@dataclass(frozen=True)
class GpConfig:
    population_size: int = 1000
    pool_size: int = 5
    crossover_probability: float = 1.0
    mutation_probability: float = 0.25
    max_depth: int = 10
    max_size: int = 15
    evaluation_budget: int = 200_000
    operators: tuple = DEFAULT_OPERATORS
    constant_scale: float = 1.0
    inner_iterations: int = 100
    final_iterations: int = 100
    target_score: float | None = None
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "operators", tuple(self.operators))
        for p in (self.crossover_probability, self.mutation_probability):
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"probabilities must lie in [0, 1], got {p}")
        if self.max_size < 1 or self.max_depth < 1:
            raise ValueError("max_size and max_depth must be at least 1")
        if self.population_size < 1 or self.pool_size < 1:
            raise ValueError("population_size and pool_size must be at least 1")
        if self.evaluation_budget < self.population_size:
            raise ValueError("evaluation_budget must cover one population")
        unknown = [op for op in self.operators if op not in UNARY_OPS + BINARY_OPS]
        if unknown:
            raise ValueError(f"unknown operator(s): {unknown}")

    @property
    def unary_ops(self) -> tuple:
        return tuple(op for op in self.operators if op in UNARY_OPS)

    @property
    def binary_ops(self) -> tuple:
        return tuple(op for op in self.operators if op in BINARY_OPS)


@dataclass
class Individual:
    expr: Node
    score: MultiViewScore | None = None
    size: int = 0
    depth: int = 0

    def __post_init__(self):
        if not self.size:
            self.size, self.depth = size_and_depth(self.expr)

    @property
    def fitness(self) -> float:
        return math.inf if self.score is None else self.score.aggregated


@dataclass
class EvolutionResult:
    model: ParametricModel
    expression: Node
    score: MultiViewScore
    history: list = field(default_factory=list)
    evaluations: int = 0
    generations: int = 0


def _fits(expr: Node, cfg: GpConfig) -> bool:
    s, d = size_and_depth(expr)
    return s <= cfg.max_size and d <= cfg.max_depth


# ---------------------------------------------------------------------------
# random trees


def _leaf(rng: np.random.Generator, n_vars: int, cfg: GpConfig) -> Node:
    if n_vars > 0 and rng.random() < 0.5:
        return Var(int(rng.integers(n_vars)))
    return Const(float(rng.normal(0.0, cfg.constant_scale)))


def random_tree(rng: np.random.Generator, target: int, max_depth: int,
                n_vars: int, cfg: GpConfig) -> Node:
    """Grow a tree of ``target`` nodes (fewer if the depth limit bites)."""
    if target <= 1 or max_depth <= 1:
        return _leaf(rng, n_vars, cfg)
    choices = []
    if cfg.unary_ops:
        choices += list(cfg.unary_ops)
    if cfg.binary_ops and target >= 3:
        choices += list(cfg.binary_ops)
    if not choices:
        return _leaf(rng, n_vars, cfg)
    op = choices[int(rng.integers(len(choices)))]
    if op in UNARY_OPS:
        return Unary(op, random_tree(rng, target - 1, max_depth - 1, n_vars, cfg))
    left = int(rng.integers(1, target - 1))
    return Binary(op,
                  random_tree(rng, left, max_depth - 1, n_vars, cfg),
                  random_tree(rng, target - 1 - left, max_depth - 1, n_vars, cfg))


def init_population(cfg: GpConfig, rng: np.random.Generator, n_vars: int) -> list[Individual]:
    pop = []
    for _ in range(cfg.population_size):
        target = int(rng.integers(1, cfg.max_size + 1))
        pop.append(Individual(random_tree(rng, target, cfg.max_depth, n_vars, cfg)))
    return pop


# ---------------------------------------------------------------------------
# selection and variation


def tournament_select(pop: list[Individual], pool_size: int,
                      rng: np.random.Generator) -> Individual:
    """Best of ``pool_size`` uniform draws (with replacement).

    Ties on fitness go to the smaller tree, then to the earlier index.
    """
    if not pop:
        raise ValueError("cannot select from an empty population")
    picks = rng.integers(len(pop), size=pool_size)
    best = min(picks, key=lambda i: (pop[i].fitness, pop[i].size, i))
    return pop[best]


def crossover(a: Individual, b: Individual, cfg: GpConfig,
              rng: np.random.Generator) -> Node:
    """Replace a random subtree of ``a`` by a random subtree of ``b``."""
    paths_a = subtree_paths(a.expr)
    paths_b = subtree_paths(b.expr)
    for _ in range(_MAX_RETRIES):
        pa = paths_a[int(rng.integers(len(paths_a)))]
        pb = paths_b[int(rng.integers(len(paths_b)))]
        child = replace_subtree(a.expr, pa, get_subtree(b.expr, pb))
        if _fits(child, cfg):
            return child
    return a.expr


def _point(expr, rng, cfg, n_vars):
    paths = [p for p in subtree_paths(expr) if not isinstance(get_subtree(expr, p), (Var, Const))]
    paths = [p for p in paths if not (isinstance(get_subtree(expr, p), Unary)
                                      and get_subtree(expr, p).op == "neg")]
    if not paths:
        return expr
    path = paths[int(rng.integers(len(paths)))]
    node = get_subtree(expr, path)
    pool = cfg.unary_ops if isinstance(node, Unary) else cfg.binary_ops
    pool = [op for op in pool if op != node.op]
    if not pool:
        return expr
    op = pool[int(rng.integers(len(pool)))]
    if isinstance(node, Unary):
        new = Unary(op, node.child)
    else:
        new = Binary(op, node.left, node.right)
    return replace_subtree(expr, path, new)


def _perturb(expr, rng, cfg, n_vars):
    paths = [p for p in subtree_paths(expr) if isinstance(get_subtree(expr, p), Const)]
    if not paths:
        return expr
    path = paths[int(rng.integers(len(paths)))]
    value = get_subtree(expr, path).value * rng.normal(1.0, 0.1)
    if not math.isfinite(value):
        return expr
    return replace_subtree(expr, path, Const(float(value)))


def _swap_var(expr, rng, cfg, n_vars):
    paths = [p for p in subtree_paths(expr) if isinstance(get_subtree(expr, p), Var)]
    if not paths or n_vars < 1:
        return expr
    path = paths[int(rng.integers(len(paths)))]
    return replace_subtree(expr, path, Var(int(rng.integers(n_vars))))


def _replace(expr, rng, cfg, n_vars):
    paths = subtree_paths(expr)
    path = paths[int(rng.integers(len(paths)))]
    total, _ = size_and_depth(expr)
    sub, _ = size_and_depth(get_subtree(expr, path))
    room = max(1, cfg.max_size - (total - sub))
    depth_room = max(1, cfg.max_depth - len(path))
    fresh = random_tree(rng, int(rng.integers(1, room + 1)), depth_room, n_vars, cfg)
    return replace_subtree(expr, path, fresh)


MUTATIONS = (_point, _perturb, _swap_var, _replace)


def mutate(expr: Node, cfg: GpConfig, rng: np.random.Generator, n_vars: int = 1) -> Node:
    """With ``cfg.mutation_probability``, apply one uniformly chosen mutation."""
    if cfg.mutation_probability <= 0.0 or rng.random() >= cfg.mutation_probability:
        return expr
    kind = MUTATIONS[int(rng.integers(len(MUTATIONS)))]
    for _ in range(_MAX_RETRIES):
        child = kind(expr, rng, cfg, n_vars)
        if _fits(child, cfg):
            return child
    return expr


# ---------------------------------------------------------------------------
# main loop


class _Evaluator:
    """Counts fitness evaluations and memoizes them by expression."""

    def __init__(self, views: ViewSet, kind: AggregationKind, options: FitOptions):
        self.views = views
        self.kind = kind
        self.options = options
        self.calls = 0
        self.cache: dict = {}

    def __call__(self, ind: Individual) -> None:
        self.calls += 1
        score = self.cache.get(ind.expr)
        if score is None:
            score = evaluate_multiview(ind.expr, self.views, self.kind, self.options)
            self.cache[ind.expr] = score
        ind.score = score


def _key(ind: Individual):
    return (ind.fitness, ind.size)


def evolve(cfg: GpConfig, views: ViewSet, kind=AggregationKind.MAX) -> EvolutionResult:
    """Generational GP with one elite, stopping once the budget is spent.

    Every individual scored counts as one evaluation. The best-ever
    individual is refitted with ``cfg.final_iterations`` LM steps and
    returned as a parametric model carrying its last-view parameters.
    """
    kind = AggregationKind.parse(kind)
    init_ss, select_ss, vary_ss = np.random.SeedSequence(int(cfg.seed)).spawn(3)
    init_rng = np.random.default_rng(init_ss)
    select_rng = np.random.default_rng(select_ss)
    vary_rng = np.random.default_rng(vary_ss)
    n_vars = views.n_features

    evaluator = _Evaluator(views, kind, FitOptions(max_iterations=cfg.inner_iterations))
    pop = init_population(cfg, init_rng, n_vars)
    for ind in pop:
        evaluator(ind)
    best = min(pop, key=_key)
    history = [best.fitness]
    generations = 0

    def done():
        if evaluator.calls >= cfg.evaluation_budget:
            return True
        return cfg.target_score is not None and best.fitness <= cfg.target_score

    while not done():
        remaining = cfg.evaluation_budget - evaluator.calls
        n_children = min(cfg.population_size - 1, remaining)
        elite = min(pop, key=_key)
        offspring = []
        for _ in range(n_children):
            a = tournament_select(pop, cfg.pool_size, select_rng)
            if vary_rng.random() < cfg.crossover_probability:
                b = tournament_select(pop, cfg.pool_size, select_rng)
                child = crossover(a, b, cfg, vary_rng)
            else:
                child = a.expr
            child = mutate(child, cfg, vary_rng, n_vars)
            ind = Individual(child)
            evaluator(ind)
            offspring.append(ind)
        # a short final generation keeps the leftover parents
        filler = [p for p in pop if p is not elite][: cfg.population_size - 1 - n_children]
        pop = [elite] + offspring + filler
        generations += 1
        gen_best = min(pop, key=_key)
        if _key(gen_best) < _key(best):
            best = gen_best
        history.append(best.fitness)
        log.debug("generation %d best %.6g (%d evaluations)",
                  generations, best.fitness, evaluator.calls)

    final = evaluate_multiview(best.expr, views, kind,
                               FitOptions(max_iterations=cfg.final_iterations))
    return EvolutionResult(final.last_view_model, best.expr, final, history,
                           evaluator.calls, generations)


def with_overrides(cfg: GpConfig, **changes) -> GpConfig:
    return replace(cfg, **{k: v for k, v in changes.items() if v is not None})
