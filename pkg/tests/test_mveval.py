import itertools
import math

import numpy as np
import pytest

from mvsr.datasets import Dataset, ViewSet, generate_benchmark
from mvsr.expr import parse
from mvsr.mveval import AggregationKind, aggregate, evaluate_multiview

KINDS = list(AggregationKind)


@pytest.mark.parametrize("kind, expected", [
    ("max", 3.0), ("min", 1.0), ("average", 2.0), ("median", 2.0),
    ("harmonic_mean", 18.0 / 11.0),
])
def test_aggregate_examples(kind, expected):
    assert aggregate([1.0, 2.0, 3.0], kind) == pytest.approx(expected, rel=1e-15, abs=0)


def test_aggregate_even_median_and_zero_harmonic():
    assert aggregate([4.0, 1.0, 3.0, 2.0], "median") == 2.5
    assert aggregate([0.0, 2.0], "harmonic_mean") == 0.0


@pytest.mark.parametrize("kind", KINDS)
@pytest.mark.parametrize("bad", [math.nan, math.inf])
def test_aggregate_non_finite_is_inf(kind, bad):
    assert aggregate([1.0, bad, 2.0], kind) == math.inf


def test_aggregate_empty_and_unknown():
    with pytest.raises(ValueError):
        aggregate([], "max")
    with pytest.raises(ValueError):
        aggregate([1.0], "mode")


def test_aggregate_bounds_and_permutations():
    rng = np.random.default_rng(0)
    for _ in range(100):
        losses = list(rng.exponential(1.0, size=int(rng.integers(1, 6))))
        lo, hi = min(losses), max(losses)
        for kind in KINDS:
            value = aggregate(losses, kind)
            assert lo * (1 - 1e-12) <= value <= hi * (1 + 1e-12)
            for perm in itertools.islice(itertools.permutations(losses), 6):
                assert aggregate(perm, kind) == pytest.approx(value, rel=1e-15)
        assert aggregate(losses[:1], "harmonic_mean") == pytest.approx(losses[0], rel=1e-15)


def test_true_skeleton_scores_zero_on_noiseless_views():
    views = generate_benchmark("f1_views", 0.0, seed=0)
    e = parse("0.5 + 0.5*x0 + 0.5*square(x0) + 0.5*(x0*square(x0))")
    score = evaluate_multiview(e, views)
    assert score.aggregated < 1e-12
    assert len(score.per_view) == 4


def test_identical_views_give_identical_losses():
    x = np.linspace(-1, 1, 15)[:, None]
    v = Dataset(x, np.sin(x[:, 0]))
    score = evaluate_multiview(parse("1.0*x0"), ViewSet((v, v, v)))
    assert len(set(score.losses)) == 1


def test_domain_error_gives_inf_without_raising():
    x = np.linspace(-2, 2, 20)[:, None]
    views = ViewSet((Dataset(x, x[:, 0]), Dataset(x + 3.0, x[:, 0])))
    score = evaluate_multiview(parse("sqrt(1.0*x0)"), views, "max")
    assert score.aggregated == math.inf


def test_variable_out_of_range():
    views = ViewSet((Dataset(np.zeros((3, 1)), [0, 0, 0]),))
    with pytest.raises(ValueError):
        evaluate_multiview(parse("x1"), views)
