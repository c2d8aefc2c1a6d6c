import math

import numpy as np
import pytest

from mvsr.datasets import (BENCHMARKS, Dataset, NoiseSpec, ViewSet, add_noise, f1,
                           generate_benchmark, load_csv, scale_target, write_csv)


@pytest.mark.parametrize("bench", BENCHMARKS)
def test_generator_is_deterministic(bench):
    a = generate_benchmark(bench, 0.1, seed=3)
    b = generate_benchmark(bench, 0.1, seed=3)
    for u, v in zip(a.views + a.clean, b.views + b.clean):
        assert u.X.tobytes() == v.X.tobytes()
        assert u.y.tobytes() == v.y.tobytes()
    c = generate_benchmark(bench, 0.1, seed=4)
    assert c.views[0].y.tobytes() != a.views[0].y.tobytes()


def test_f1_view_one_at_left_end():
    assert f1(np.array([[-2.0]]), (2.0, 2.0, 0.0, 0.0))[0] == -2.0


def test_f1_views_layout():
    vs = generate_benchmark("f1_views", 0.0)
    assert len(vs) == 4
    for v in vs:
        np.testing.assert_array_equal(v.X[:, 0], np.linspace(-2, 2, 20))
    assert vs.thetas[0] == (2.0, 2.0, 0.0, 0.0)


def test_f1_partial_domains():
    vs = generate_benchmark("f1_partial", 0.0)
    for v, (lo, hi) in zip(vs, [(-2, -1), (-1, 0), (0, 1), (1, 2)]):
        assert v.n_rows == 20
        assert v.X[0, 0] == lo and v.X[-1, 0] == hi
    assert all(t == (2.0, -2.0, 2.0, 2.0) for t in vs.thetas)


@pytest.mark.parametrize("bench, m", [("f2_views", 5), ("f3_views", 4)])
def test_friedman_shapes_and_domains(bench, m):
    vs = generate_benchmark(bench, 0.0, seed=1)
    assert len(vs) == 4
    for v in vs:
        assert v.X.shape == (100, m)
        assert np.isfinite(v.y).all()
    if bench == "f3_views":
        X = np.vstack([v.X for v in vs])
        assert X[:, 0].min() >= 0 and X[:, 0].max() <= 100
        assert X[:, 1].min() >= 40 * math.pi and X[:, 1].max() <= 560 * math.pi
        assert X[:, 3].min() >= 1 and X[:, 3].max() <= 11


def test_noiseless_copy_is_scaled_clean_target():
    vs = generate_benchmark("f1_views", 0.1, seed=0)
    for v, c, theta in zip(vs.views, vs.clean, vs.thetas):
        np.testing.assert_array_equal(c.y, scale_target(f1(c.X, theta)))
        assert not np.array_equal(v.y, c.y)
    assert vs.noiseless().views == vs.clean


def test_noise_statistics():
    rng = np.random.default_rng(0)
    y = rng.normal(size=10_000)
    noisy = add_noise(y, NoiseSpec(0.1), np.random.default_rng(1))
    target = np.std(y) / 3.0
    assert abs(np.std(noisy - y) - target) <= 0.03 * target


def test_noise_identity_cases():
    y = np.linspace(-1, 1, 7)
    out = add_noise(y, NoiseSpec(0.0), np.random.default_rng(0))
    assert out.tobytes() == y.tobytes()
    const = np.full(5, 2.5)
    assert add_noise(const, NoiseSpec(0.5), np.random.default_rng(0)).tobytes() == const.tobytes()


def test_noise_rate_must_be_below_one():
    with pytest.raises(ValueError):
        NoiseSpec(1.0)
    with pytest.raises(ValueError):
        NoiseSpec(-0.1)


def test_scale_target_examples():
    np.testing.assert_array_equal(scale_target([1, -5, 2]), [2, -10, 4])
    np.testing.assert_array_equal(scale_target([10]), [10])
    with pytest.raises(ValueError):
        scale_target([0, 0])


def test_scale_target_peak_is_ten():
    rng = np.random.default_rng(8)
    for _ in range(100):
        y = rng.normal(0, 10 ** rng.uniform(-5, 5), size=int(rng.integers(1, 50)))
        peak = np.max(np.abs(scale_target(y)))
        assert abs(peak - 10.0) <= np.spacing(10.0)


def test_csv_round_trip(tmp_path):
    d = Dataset(np.array([[1.0, 2.0], [3.0, 4.5]]), [0.1, -7.25])
    write_csv(d, tmp_path / "v.csv")
    back = load_csv(tmp_path / "v.csv")
    assert back.X.tobytes() == d.X.tobytes() and back.y.tobytes() == d.y.tobytes()


@pytest.mark.parametrize("text, shape", [
    ("x0,y\n1,2\n3,4\n", (2, 1)),
    ("x0,x1,y\n1,2,3\n", (1, 2)),
    ("y,x1,x0\n3,2,1\n", (1, 2)),
])
def test_load_csv_examples(tmp_path, text, shape):
    p = tmp_path / "d.csv"
    p.write_text(text)
    d = load_csv(p)
    assert d.X.shape == shape
    if text.startswith("y,x1"):
        np.testing.assert_array_equal(d.X, [[1.0, 2.0]])


@pytest.mark.parametrize("text, msg", [
    ("", "empty"),
    ("x0,z\n1,2\n", "missing 'y'"),
    ("x0,y\n1,2\n3\n", "expected 2 fields"),
    ("x0,y\n1,abc\n", "non-numeric"),
    ("x0,y\n1,nan\n", "non-finite"),
    ("x1,y\n1,2\n", "feature columns"),
])
def test_load_csv_errors(tmp_path, text, msg):
    p = tmp_path / "d.csv"
    p.write_text(text)
    with pytest.raises(ValueError, match=msg):
        load_csv(p)


def test_viewset_requires_uniform_features():
    with pytest.raises(ValueError):
        ViewSet((Dataset(np.zeros((2, 1)), [0, 0]), Dataset(np.zeros((2, 2)), [0, 0])))
    with pytest.raises(ValueError):
        ViewSet(())
