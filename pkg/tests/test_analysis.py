import math

import numpy as np
import pytest

from mvsr.analysis import (ResultRecord, average_ranks, clip_score, heatmap_grid,
                           param_delta, rank_methods, records_from_csv, records_to_csv,
                           refit_score)
from mvsr.datasets import generate_benchmark
from mvsr.model import ParametricModel


def _rec(mode, mse=0.0, n=4, seed=0, noise=0.0, size=15, fn="f1_views"):
    return ResultRecord(fn, mode, noise, size, seed, n, mse, "x0")


def test_refit_true_skeleton_is_zero():
    views = generate_benchmark("f1_views", 0.1, seed=2)
    model = ParametricModel.from_text("p0 + p1*x0 + p2*square(x0) + p3*(x0*square(x0))")
    assert refit_score(model, views) < 1e-16


def test_refit_cannot_express_cubic():
    views = generate_benchmark("f1_views", 0.0)
    model = ParametricModel.from_text("p0 + p1*x0")
    assert refit_score(model, views) > 0.1


def test_refit_non_finite_is_inf():
    views = generate_benchmark("f1_views", 0.0)
    assert refit_score(ParametricModel.from_text("sqrt(p0*x0)"), views) == math.inf


def test_clip_and_heatmap():
    assert clip_score(math.inf) == 5.0 and clip_score(math.nan) == 5.0
    assert clip_score(0.25) == 0.25
    cells = heatmap_grid([_rec("mvsr", 1.0), _rec("mvsr", math.inf, seed=1),
                          _rec("single_view(1)", 0.0), _rec("single_view(1)", 0.0, seed=1)])
    assert cells[0]["run_mode"] == "mvsr" and cells[0]["mean_clipped_mse"] == 3.0
    assert cells[1]["mean_clipped_mse"] == 0.0 and cells[1]["count"] == 2
    assert len(cells) == 2


def test_param_delta():
    assert param_delta(6, 4) == 2 and param_delta(3, 4) == 1 and param_delta(4, 4) == 0


def test_friedman_hand_case():
    # method 0 always best, method 2 always worst
    D = [[0, 0, 0, 0], [1, 1, 1, 1], [2, 2, 2, 2]]
    table = average_ranks(D, ["a", "b", "c"])
    np.testing.assert_array_equal(table.average_ranks, [1.0, 2.0, 3.0])
    assert table.friedman_statistic == 8.0


def test_all_ties_give_zero():
    table = average_ranks(np.ones((3, 5)))
    np.testing.assert_array_equal(table.average_ranks, [2.0, 2.0, 2.0])
    assert table.friedman_statistic == 0.0


def test_mid_ranks_and_shape_errors():
    table = average_ranks([[0, 1], [0, 0], [3, 2]])
    np.testing.assert_array_equal(table.ranks[:, 0], [1.5, 1.5, 3.0])
    with pytest.raises(ValueError):
        average_ranks([[1, 2, 3]])


def test_ranks_invariant_under_monotone_transform():
    rng = np.random.default_rng(0)
    D = rng.integers(0, 5, size=(4, 12)).astype(float)
    a, b = average_ranks(D), average_ranks(np.exp(D) * 3 + 1)
    np.testing.assert_array_equal(a.average_ranks, b.average_ranks)
    assert a.friedman_statistic == b.friedman_statistic


def test_rank_methods_uses_common_instances():
    recs = [_rec("mvsr", n=4, seed=s) for s in range(3)]
    recs += [_rec("single_view(1)", n=2, seed=s) for s in range(3)]
    recs += [_rec("single_view(1)", n=9, seed=7)]
    table = rank_methods(recs, {"f1_views": 4})
    assert table.methods == ["mvsr", "single_view(1)"]
    assert table.deltas.shape == (2, 3)
    np.testing.assert_array_equal(table.average_ranks, [1.0, 2.0])


def test_results_csv_round_trip():
    recs = [_rec("mvsr", math.inf, seed=1), _rec("mvsr", 0.1, seed=0, noise=0.033)]
    text = records_to_csv(recs)
    assert text.splitlines()[0] == "function,run_mode,noise,max_size,seed,n_params,refit_mse,expression"
    back = records_from_csv(text)
    assert [r.sort_key() for r in back] == sorted(r.sort_key() for r in recs)
    assert back[0].refit_mse == math.inf
