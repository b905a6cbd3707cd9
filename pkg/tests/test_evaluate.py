import csv
import math

import numpy as np
import pytest

from infosel import bayes
from infosel.evaluate import (GpToyConfig, class_variance, gp_predict, gp_surprise_learnability,
                              gp_toy, relearn_accuracy, relearn_fit, write_gp_curves)
from infosel.memory import Memory, make_item
from infosel.streams import Dataset


def filled_memory(raw, labels, k, c=0.1):
    raw = np.asarray(raw, dtype=np.float64)
    mem = Memory(len(raw), bayes.init_posterior(raw.shape[1], k, 0.3, jitter=c))
    for i, (x, y) in enumerate(zip(raw, labels)):
        mem.insert(make_item(i, x, int(y), k))
    return mem


def test_relearn_fit_equals_posterior_mean():
    rng = np.random.default_rng(0)
    mem = filled_memory(rng.standard_normal((30, 4)), rng.integers(0, 3, 30), 3)
    np.testing.assert_allclose(relearn_fit(mem, 0.1), mem.posterior.mean_weights(), atol=1e-10)


def test_relearn_orthogonal_points_recover_own_class():
    raw = 5 * np.eye(4)
    mem = filled_memory(raw, [0, 1, 2, 3], 4)
    test = Dataset(raw, [0, 1, 2, 3], 4)
    assert relearn_accuracy(relearn_fit(mem, 0.1), test) == 1.0


def test_relearn_huge_jitter_collapses_to_chance():
    rng = np.random.default_rng(1)
    labels = np.repeat(np.arange(5), 20)
    raw = rng.standard_normal((100, 3)) + 3 * labels[:, None]
    mem = filled_memory(raw, labels, 5, c=1e12)
    W = relearn_fit(mem, 1e12)
    assert np.abs(W).max() < 1e-9
    assert relearn_accuracy(np.zeros_like(W), Dataset(raw, labels, 5)) == pytest.approx(0.2)


def test_relearn_accuracy_constant_model():
    labels = np.repeat(np.arange(5), 4)
    test = Dataset(np.zeros((20, 2)), labels, 5)
    W = np.zeros((3, 5))
    W[:, 0] = 1.0
    assert relearn_accuracy(W, test) == pytest.approx(0.2)


def test_relearn_accuracy_random_weights_near_chance():
    rng = np.random.default_rng(2)
    labels = np.repeat(np.arange(4), 2500)
    test = Dataset(rng.standard_normal((10_000, 6)), labels, 4)
    accs = [relearn_accuracy(rng.standard_normal((7, 4)), test) for _ in range(20)]
    assert np.mean(accs) == pytest.approx(0.25, abs=0.03)


def test_relearn_empty_memory_rejected():
    with pytest.raises(ValueError):
        relearn_fit(Memory(2, bayes.init_posterior(1, 2, 0.3, jitter=0.1)), 0.1)


def test_class_variance_examples():
    assert class_variance([10, 10, 10, 10]) == 0.0
    assert class_variance([20, 0]) == 100.0
    counts = np.random.default_rng(3).integers(0, 30, 8)
    assert class_variance(counts) == pytest.approx(class_variance(counts[::-1]))
    assert class_variance(counts) == pytest.approx(np.var(counts))
    with pytest.raises(ValueError):
        class_variance([-1, 1])


# GP toy

def test_gp_predict_matches_textbook_formula():
    cfg = GpToyConfig()
    X = np.array([-0.5, 0.2, 0.9])
    y = np.array([0.3, -0.1, 0.4])
    xs = np.array([0.0, 1.5])
    K = cfg.kernel(X, X) + cfg.noise_var * np.eye(3)
    ks = cfg.kernel(X, xs)
    mean, var = gp_predict(cfg, X, y, xs)
    np.testing.assert_allclose(mean, ks.T @ np.linalg.solve(K, y))
    np.testing.assert_allclose(var, 1 - np.diag(ks.T @ np.linalg.solve(K, ks)) + cfg.noise_var)


def test_gp_kernel_shape():
    assert GpToyConfig().kernel(0.0, 1.0)[0, 0] == pytest.approx(math.exp(-2))
    with pytest.raises(ValueError):
        GpToyConfig(noise_var=0.0)


def test_gp_surprise_at_grid_point_near_noise_floor():
    cfg = GpToyConfig()
    rng = np.random.default_rng(4)
    X = np.asarray(cfg.grid)
    y = np.sin(2 * X) + 0.2 * rng.standard_normal(len(X))
    for i in range(len(X)):
        s, _ = gp_surprise_learnability(cfg, X, y, X[i], y[i])
        _, v = gp_predict(cfg, X, y, X[i])
        floor = 0.5 * math.log(2 * math.pi * v[0])
        assert floor <= s <= floor + 1.0


def test_gp_surprise_diverges_in_zero_noise_limit():
    X = np.asarray(GpToyConfig().grid)
    y = np.zeros_like(X)
    s = [gp_surprise_learnability(GpToyConfig(noise_var=nv), X, y, X[3], 1.0)[0]
         for nv in (0.04, 1e-3, 1e-6)]
    assert s[0] < s[1] < s[2] and s[2] > 1e3


def test_gp_toy_shapes_and_determinism():
    cfg = GpToyConfig(n_draws=12, seed=5)
    a, b = gp_toy(cfg), gp_toy(cfg)
    assert a.surprise.shape == a.learnability.shape == (12, 2)
    np.testing.assert_array_equal(a.learnability, b.learnability)
    assert 0.0 <= a.learnability_win_rate <= 1.0
    # Learnability never falls below negative surprise.
    assert np.all(a.learnability >= -a.surprise - 1e-12)


def test_gp_curves_csv(tmp_path):
    cfg = GpToyConfig(n_draws=1)
    res = gp_toy(cfg)
    path = tmp_path / "curves.csv"
    write_gp_curves(path, cfg, res.memory_targets[0], n_points=11)
    rows = list(csv.DictReader(open(path)))
    assert list(rows[0]) == ["probe_x", "probe_y", "condition", "x", "mean", "std"]
    assert len(rows) == 2 * 2 * 11
    assert {r["condition"] for r in rows} == {"memory", "memory+probe"}
    assert all(float(r["std"]) >= math.sqrt(cfg.noise_var) - 1e-6 for r in rows)
