"""Bayesian linear model over normalized features and closed-form selection criteria.

The scorer keeps the inverse precision ``inv_a = (H^T H + c I)^{-1}`` and the
cross moment ``b = H^T Y`` of a multi-output Bayesian linear regression, where
the rows of ``H`` are normalized features and ``Y`` stacks one-hot targets.
Every criterion (surprise, learnability, MIC, weighted information gain,
entropy reduction) reduces to a handful of quantities per query point:

* ``q0 = h^T inv_a h`` and ``mean0 = h^T inv_a b`` under the current posterior;
* ``q1`` and ``mean1``, the same quantities after the point itself is absorbed.

The second pair follows from the first by a single Sherman-Morrison step, so
scoring a point costs O(d^2) and never forms the augmented inverse.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import linalg

LOG_2PI = math.log(2.0 * math.pi)

#: Downdates with ``1 - h^T inv_a h`` at or below this value are refused.
DOWNDATE_GUARD = 1e-8

CRITERIA = ("mic", "ig", "er")


class InvalidConfigError(ValueError):
    """Raised for non-positive hyperparameters or a failed factorization."""


class DegradedConditioningError(ArithmeticError):
    """Raised when a rank-one downdate would lose positive definiteness.

    Callers are expected to rebuild the posterior from the buffer instead.
    """


@dataclass
class PosteriorState:
    """Sufficient statistics of the weight posterior ``N(inv_a b, sigma2 inv_a)``."""

    inv_a: np.ndarray
    b: np.ndarray
    sigma2: float
    c: float
    count: int = 0
    ops_since_rebuild: int = 0

    @property
    def dim(self) -> int:
        return self.inv_a.shape[0]

    @property
    def n_outputs(self) -> int:
        return self.b.shape[1]

    def copy(self) -> "PosteriorState":
        return PosteriorState(self.inv_a.copy(), self.b.copy(), self.sigma2, self.c,
                              self.count, self.ops_since_rebuild)

    def mean_weights(self) -> np.ndarray:
        """Posterior mean of the d x K weight matrix."""
        return self.inv_a @ self.b


@dataclass(frozen=True)
class GaussianPredictive:
    """Per-output predictive means sharing one variance."""

    means: np.ndarray
    variance: float


@dataclass
class PointStats:
    """Before/after quantities for a set of query points (one row per point).

    ``mean0``/``q0`` describe the predictive distribution under the posterior
    the point is scored against. The "after" quantities (the point absorbed)
    follow from them: ``q1 = q0/(1+q0)`` and the residual shrinks by
    ``1/(1+q0)``, so a single squared residual per point serves both densities.
    """

    targets: np.ndarray
    mean0: np.ndarray
    q0: np.ndarray
    sigma2: float = field(default=1.0)

    @property
    def q1(self) -> np.ndarray:
        return self.q0 / (1.0 + self.q0)

    @property
    def mean1(self) -> np.ndarray:
        return self.targets - (self.targets - self.mean0) / (1.0 + self.q0)[:, None]

    @cached_property
    def resid0(self) -> np.ndarray:
        r = self.targets - self.mean0
        return np.einsum("ij,ij->i", r, r)

    @property
    def resid1(self) -> np.ndarray:
        return self.resid0 / (1.0 + self.q0) ** 2


def normalize_feature(h0) -> np.ndarray:
    """Append a bias coordinate and scale by ``1/sqrt(d0 + 1)``.

    Accepts a single raw feature of length ``d0`` or a matrix with one raw
    feature per row.

    >>> normalize_feature([0.0, 0.0, 0.0])
    array([0. , 0. , 0. , 0.5])
    """
    h0 = np.asarray(h0, dtype=np.float64)
    if h0.ndim not in (1, 2) or h0.shape[-1] < 1:
        raise ValueError(f"expected a raw feature of length >= 1, got shape {h0.shape}")
    if not np.all(np.isfinite(h0)):
        raise ValueError("raw feature contains non-finite entries")
    d = h0.shape[-1] + 1
    ones = np.ones(h0.shape[:-1] + (1,))
    return np.concatenate([h0, ones], axis=-1) / math.sqrt(d)


def one_hot(labels, n_classes: int) -> np.ndarray:
    """One-hot rows for integer labels in ``[0, n_classes)``."""
    labels = np.asarray(labels)
    if np.any(labels < 0) or np.any(labels >= n_classes):
        raise ValueError(f"labels must lie in [0, {n_classes})")
    return np.eye(n_classes)[labels]


def _check_hyper(sigma: float, c: float) -> None:
    if not (sigma > 0 and math.isfinite(sigma)):
        raise InvalidConfigError(f"sigma must be positive, got {sigma}")
    if not (c > 0 and math.isfinite(c)):
        raise InvalidConfigError(f"jitter c must be positive, got {c}")


def init_posterior(d0: int, n_outputs: int, sigma: float, sigma_w: float | None = None,
                   *, jitter: float | None = None) -> PosteriorState:
    """Prior state for raw features of dimension ``d0`` and ``n_outputs`` targets.

    The prior enters only through ``c = sigma^2 / sigma_w^2``; pass either
    ``sigma_w`` or the jitter ``c`` directly.
    """
    if d0 < 1 or n_outputs < 1:
        raise InvalidConfigError("d0 and n_outputs must be >= 1")
    if (sigma_w is None) == (jitter is None):
        raise InvalidConfigError("pass exactly one of sigma_w or jitter")
    if sigma_w is not None:
        if not sigma_w > 0:
            raise InvalidConfigError(f"sigma_w must be positive, got {sigma_w}")
        jitter = sigma ** 2 / sigma_w ** 2
    _check_hyper(sigma, jitter)
    d = d0 + 1
    return PosteriorState(np.eye(d) / jitter, np.zeros((d, n_outputs)), sigma ** 2, jitter)


def rank_one_add(state: PosteriorState, h, y) -> PosteriorState:
    """Absorb one (feature, target) pair in place via Sherman-Morrison."""
    h = np.asarray(h, dtype=np.float64)
    u = state.inv_a @ h
    denom = 1.0 + h @ u
    state.inv_a -= np.outer(u, u / denom)
    state.b += np.outer(h, y)
    state.count += 1
    state.ops_since_rebuild += 1
    return state


def rank_one_remove(state: PosteriorState, h, y) -> PosteriorState:
    """Remove a previously absorbed pair in place.

    Raises :class:`DegradedConditioningError` when ``1 - h^T inv_a h`` is at or
    below :data:`DOWNDATE_GUARD`; the state is left untouched in that case.
    """
    h = np.asarray(h, dtype=np.float64)
    u = state.inv_a @ h
    denom = 1.0 - h @ u
    if not denom > DOWNDATE_GUARD:
        raise DegradedConditioningError(f"downdate denominator {denom:.3e} <= {DOWNDATE_GUARD}")
    state.inv_a += np.outer(u, u / denom)
    state.b -= np.outer(h, y)
    state.count -= 1
    state.ops_since_rebuild += 1
    return state


def rebuild(features, targets, sigma: float, c: float) -> PosteriorState:
    """Posterior from scratch, ``inv_a = (H^T H + c I)^{-1}`` via Cholesky."""
    _check_hyper(sigma, c)
    H = np.atleast_2d(np.asarray(features, dtype=np.float64))
    Y = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    if H.shape[0] != Y.shape[0]:
        raise ValueError(f"features and targets disagree on row count: {H.shape[0]} != {Y.shape[0]}")
    d = H.shape[1]
    a = H.T @ H
    a[np.diag_indices(d)] += c
    try:
        factor = linalg.cho_factor(a, lower=True)
    except linalg.LinAlgError as exc:
        raise InvalidConfigError("precision matrix is not positive definite") from exc
    inv_a = linalg.cho_solve(factor, np.eye(d))
    inv_a = 0.5 * (inv_a + inv_a.T)
    return PosteriorState(inv_a, H.T @ Y, sigma ** 2, c, count=H.shape[0])


def predictive(state: PosteriorState, h) -> GaussianPredictive:
    """Predictive distribution ``N(h^T inv_a b, sigma2 h^T inv_a h + sigma2)``."""
    u = state.inv_a @ np.asarray(h, dtype=np.float64)
    q = float(np.asarray(h) @ u)
    return GaussianPredictive(u @ state.b, state.sigma2 * q + state.sigma2)


def point_stats(state: PosteriorState, H, Y) -> PointStats:
    """Before/after quantities for rows of ``H`` scored against ``state``."""
    H = np.atleast_2d(np.asarray(H, dtype=np.float64))
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
    U = H @ state.inv_a
    q0 = np.einsum("ij,ij->i", U, H)
    return PointStats(Y, U @ state.b, q0, state.sigma2)


def _log_density(resid, k, variance):
    """``sum_k log N(y_k | mean_k, variance)`` from the squared residual norm."""
    return -0.5 * k * (LOG_2PI + np.log(variance)) - resid / (2.0 * variance)


def surprise_of(stats: PointStats) -> np.ndarray:
    k = stats.targets.shape[1]
    return -_log_density(stats.resid0, k, stats.sigma2 * (1.0 + stats.q0))


def learnability_of(stats: PointStats) -> np.ndarray:
    k = stats.targets.shape[1]
    return _log_density(stats.resid1, k, stats.sigma2 * (1.0 + stats.q1))


def criterion_of(stats: PointStats, criterion: str = "mic", eta: float = 1.0) -> np.ndarray:
    """Evaluate ``mic``, ``ig`` or ``er`` from precomputed point statistics."""
    if criterion == "mic":
        return eta * learnability_of(stats) + surprise_of(stats)
    if criterion == "ig":
        k = stats.targets.shape[1]
        expected = _log_density(stats.resid1, k, stats.sigma2) - 0.5 * k * stats.q1
        return eta * expected + surprise_of(stats)
    if criterion == "er":
        return 0.5 * np.log1p(stats.q0)
    raise ValueError(f"unknown criterion {criterion!r}; expected one of {CRITERIA}")


def score(state: PosteriorState, H, Y, criterion: str = "mic", eta: float = 1.0):
    """Criterion and learnability for each row of ``H``/``Y``.

    Returns a pair of arrays; this is the batched path the selectors use.
    """
    stats = point_stats(state, H, Y)
    learn = learnability_of(stats)
    if criterion == "mic":
        return eta * learn + surprise_of(stats), learn
    return criterion_of(stats, criterion, eta), learn


def surprise(state: PosteriorState, h, y) -> float:
    """Negative log predictive density of ``y`` at ``h``, summed over outputs."""
    return float(surprise_of(point_stats(state, h, y))[0])


def learnability(state: PosteriorState, h, y) -> float:
    """Log predictive density of ``y`` at ``h`` after absorbing ``(h, y)``.

    The caller's state is not modified.
    """
    return float(learnability_of(point_stats(state, h, y))[0])


def mic(state: PosteriorState, h, y, eta: float = 1.0) -> float:
    """``eta * learnability + surprise``."""
    if eta < 0:
        raise ValueError("eta must be non-negative")
    return float(criterion_of(point_stats(state, h, y), "mic", eta)[0])


def info_gain(state: PosteriorState, h, y, eta: float = 1.0) -> float:
    """Weighted information gain; for ``eta = 1`` this is the KL divergence
    from the current weight posterior to the one that has absorbed ``(h, y)``."""
    if eta < 0:
        raise ValueError("eta must be non-negative")
    return float(criterion_of(point_stats(state, h, y), "ig", eta)[0])


def entropy_reduction(state: PosteriorState, h) -> float:
    """Drop in weight-posterior entropy from absorbing ``h``: ``0.5 log(1 + h^T inv_a h)``."""
    h = np.asarray(h, dtype=np.float64)
    return 0.5 * math.log1p(float(h @ state.inv_a @ h))


def loo_stats(state_plus: PosteriorState, H, Y) -> PointStats:
    """Point statistics of members of ``state_plus`` against the posterior without them.

    Row ``m`` describes point ``m`` scored against ``state_plus`` minus that
    point; the "after" quantities are those of ``state_plus`` itself.
    """
    H = np.atleast_2d(np.asarray(H, dtype=np.float64))
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
    U = H @ state_plus.inv_a
    q = np.einsum("ij,ij->i", U, H)
    mean_plus = U @ state_plus.b
    return _downdated_stats(Y, mean_plus, q, state_plus.sigma2)


def _downdated_stats(Y, mean_plus, q, sigma2) -> PointStats:
    gap = 1.0 - q
    if np.any(gap <= DOWNDATE_GUARD):
        raise DegradedConditioningError(f"leave-one-out denominator {gap.min():.3e} <= {DOWNDATE_GUARD}")
    mean_minus = (mean_plus - q[:, None] * Y) / gap[:, None]
    return PointStats(Y, mean_minus, q / gap, sigma2)


def mic_leave_one_out(state_plus: PosteriorState, h_m, y_m, eta: float = 1.0,
                      criterion: str = "mic") -> float:
    """MIC of a member ``(h_m, y_m)`` against ``state_plus`` with that member removed."""
    return float(criterion_of(loo_stats(state_plus, h_m, y_m), criterion, eta)[0])


def memory_loo_scores(state: PosteriorState, H_mem, Y_mem, h_new, y_new,
                      criterion: str = "mic", eta: float = 1.0) -> np.ndarray:
    """Leave-one-out criterion of every memory row against ``memory + new - row``.

    ``state`` is the posterior over the memory alone. The augmented inverse is
    applied implicitly through one Sherman-Morrison correction, so the cost is
    O(M d^2) for M memory rows and no d x d matrix is formed. Rows whose
    downdate is ill conditioned fall back to a dense rebuild.
    """
    H = np.atleast_2d(np.asarray(H_mem, dtype=np.float64))
    Y = np.atleast_2d(np.asarray(Y_mem, dtype=np.float64))
    h_new = np.asarray(h_new, dtype=np.float64)
    y_new = np.asarray(y_new, dtype=np.float64)
    u_new = state.inv_a @ h_new
    q_new = float(h_new @ u_new)
    U = H @ state.inv_a
    s = U @ h_new
    shrink = s / (1.0 + q_new)
    # Rows of (A + h_new h_new^T)^{-1} applied to each memory feature.
    q = np.einsum("ij,ij->i", U, H) - s * shrink
    b_plus_new = u_new @ state.b + q_new * y_new
    mean_plus = U @ state.b + np.outer(s, y_new) - np.outer(shrink, b_plus_new)
    try:
        stats = _downdated_stats(Y, mean_plus, q, state.sigma2)
    except DegradedConditioningError:
        return _dense_loo_scores(state, H, Y, h_new, y_new, criterion, eta)
    return criterion_of(stats, criterion, eta)


def _dense_loo_scores(state, H, Y, h_new, y_new, criterion, eta):
    out = np.empty(H.shape[0])
    sigma = math.sqrt(state.sigma2)
    for m in range(H.shape[0]):
        keep = np.arange(H.shape[0]) != m
        rest = rebuild(np.vstack([H[keep], h_new]), np.vstack([Y[keep], y_new]), sigma, state.c)
        out[m] = criterion_of(point_stats(rest, H[m], Y[m]), criterion, eta)[0]
    return out
