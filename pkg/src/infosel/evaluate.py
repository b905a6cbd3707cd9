"""Memory-quality metrics and the one-dimensional Gaussian-process toy."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from . import bayes
from .memory import Memory
from .streams import Dataset


@dataclass
class EvalReport:
    relearn_accuracy: float
    class_variance: float
    final_class_counts: np.ndarray
    reservoir_count_trace: list = field(default_factory=list)
    wall_ms: float = 0.0


def relearn_fit(memory: Memory, c: float) -> np.ndarray:
    """Ridge one-hot regression on the memory alone; returns the d x K weights.

    Solves ``(H^T H + c I) W = H^T Y``, the same system behind the scorer's
    posterior mean.
    """
    if len(memory) == 0:
        raise ValueError("cannot relearn from an empty memory")
    H, Y = memory.features, memory.targets
    a = H.T @ H
    a[np.diag_indices_from(a)] += c
    return linalg.cho_solve(linalg.cho_factor(a, lower=True), H.T @ Y)


def relearn_accuracy(weights: np.ndarray, test: Dataset) -> float:
    """Fraction of test points whose arg-max score matches the label."""
    scores = bayes.normalize_feature(test.features) @ weights
    return float(np.mean(np.argmax(scores, axis=1) == test.labels))


def class_variance(counts) -> float:
    """Population variance of per-class memory counts."""
    counts = np.asarray(counts, dtype=np.float64)
    if np.any(counts < 0):
        raise ValueError("counts must be non-negative")
    return float(np.mean(counts ** 2) - np.mean(counts) ** 2)


@dataclass
class GpToyConfig:
    kernel_scale: float = 2.0
    noise_var: float = 0.04
    grid: np.ndarray = field(default_factory=lambda: np.linspace(-1.0, 1.0, 10))
    probes: tuple = ((0.0, 1.0), (1.5, 1.0))
    n_draws: int = 100
    seed: int = 0

    def __post_init__(self):
        if not self.noise_var > 0:
            raise ValueError("noise_var must be positive")

    def kernel(self, a, b) -> np.ndarray:
        a, b = np.atleast_1d(a), np.atleast_1d(b)
        return np.exp(-self.kernel_scale * (a[:, None] - b[None, :]) ** 2)


def _cholesky(K):
    try:
        return linalg.cho_factor(K, lower=True)
    except linalg.LinAlgError:
        return linalg.cho_factor(K + 1e-8 * np.eye(len(K)), lower=True)


def gp_predict(config: GpToyConfig, X, y, xs):
    """Exact GP predictive mean and variance of noisy targets at ``xs``."""
    X, xs = np.atleast_1d(X), np.atleast_1d(xs)
    factor = _cholesky(config.kernel(X, X) + config.noise_var * np.eye(len(X)))
    ks = config.kernel(X, xs)
    mean = ks.T @ linalg.cho_solve(factor, y)
    var = 1.0 - np.einsum("ij,ij->j", ks, linalg.cho_solve(factor, ks))
    return mean, np.maximum(var, 0.0) + config.noise_var


def _log_normal(y, mean, var):
    return -0.5 * (math.log(2 * math.pi) + np.log(var)) - (y - mean) ** 2 / (2 * var)


def gp_surprise_learnability(config: GpToyConfig, X, y, x_new, y_new):
    """Surprise and learnability of ``(x_new, y_new)`` given memory ``(X, y)``."""
    m0, v0 = gp_predict(config, X, y, x_new)
    m1, v1 = gp_predict(config, np.append(X, x_new), np.append(y, y_new), x_new)
    return float(-_log_normal(y_new, m0, v0)[0]), float(_log_normal(y_new, m1, v1)[0])


@dataclass
class GpToyResult:
    surprise: np.ndarray          # (n_draws, n_probes)
    learnability: np.ndarray      # (n_draws, n_probes)
    grid_surprise_median: np.ndarray   # (n_draws,)
    memory_targets: np.ndarray    # (n_draws, n_grid)

    @property
    def learnability_win_rate(self) -> float:
        """Fraction of draws where the last probe is more learnable than the first."""
        return float(np.mean(self.learnability[:, -1] > self.learnability[:, 0]))

    @property
    def surprise_exceeds_rate(self) -> float:
        """Fraction of draws where every probe is more surprising than the
        median held-in grid point."""
        return float(np.mean(np.all(self.surprise > self.grid_surprise_median[:, None], axis=1)))


def gp_toy(config: GpToyConfig | None = None) -> GpToyResult:
    """Score the probe points against noisy GP prior draws at the grid."""
    config = config or GpToyConfig()
    rng = np.random.default_rng(config.seed)
    X = np.asarray(config.grid, dtype=np.float64)
    L = linalg.cholesky(config.kernel(X, X) + 1e-10 * np.eye(len(X)), lower=True)
    n_probes = len(config.probes)
    surp = np.empty((config.n_draws, n_probes))
    learn = np.empty((config.n_draws, n_probes))
    grid_med = np.empty(config.n_draws)
    targets = np.empty((config.n_draws, len(X)))
    for r in range(config.n_draws):
        f = L @ rng.standard_normal(len(X))
        y = f + math.sqrt(config.noise_var) * rng.standard_normal(len(X))
        targets[r] = y
        for p, (xp, yp) in enumerate(config.probes):
            surp[r, p], learn[r, p] = gp_surprise_learnability(config, X, y, xp, yp)
        m, v = gp_predict(config, X, y, X)
        grid_med[r] = np.median(-_log_normal(y, m, v))
    return GpToyResult(surp, learn, grid_med, targets)


def write_gp_curves(path, config: GpToyConfig, memory_targets, n_points: int = 200,
                    lo: float = -2.0, hi: float = 2.5) -> None:
    """CSV of predictive mean/std curves for one memory draw.

    Columns: ``probe_x, probe_y, condition, x, mean, std`` where condition is
    ``memory`` or ``memory+probe``; two curves per probe.
    """
    X = np.asarray(config.grid, dtype=np.float64)
    y = np.asarray(memory_targets, dtype=np.float64)
    xs = np.linspace(lo, hi, n_points)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["probe_x", "probe_y", "condition", "x", "mean", "std"])
        for xp, yp in config.probes:
            for cond, (Xc, yc) in (("memory", (X, y)),
                                   ("memory+probe", (np.append(X, xp), np.append(y, yp)))):
                m, v = gp_predict(config, Xc, yc, xs)
                for xi, mi, vi in zip(xs, m, v):
                    w.writerow([xp, yp, cond, f"{xi:.6g}", f"{mi:.6g}", f"{math.sqrt(vi):.6g}"])
