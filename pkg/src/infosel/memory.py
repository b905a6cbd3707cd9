"""Budgeted memory buffer kept in sync with the scorer's posterior."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import bayes


class CapacityError(RuntimeError):
    """Insert into a full buffer; use :meth:`Memory.replace` instead."""


@dataclass(frozen=True)
class MemoryItem:
    id: int
    raw_feature: np.ndarray
    feature: np.ndarray
    label: int
    one_hot: np.ndarray
    logits: Optional[np.ndarray] = None


def make_item(id: int, raw_feature, label: int, n_classes: int, logits=None,
              feature=None) -> MemoryItem:
    """Build an item, normalizing the raw feature unless ``feature`` is given."""
    raw = np.asarray(raw_feature, dtype=np.float64)
    if feature is None:
        feature = bayes.normalize_feature(raw)
    return MemoryItem(int(id), raw, np.asarray(feature, dtype=np.float64), int(label),
                      bayes.one_hot(int(label), n_classes), logits)


class Memory:
    """Ordered buffer of at most ``budget`` items.

    When a posterior is attached, every insert/replace/remove is mirrored by
    rank-one updates, and the posterior is rebuilt from the buffer contents
    every ``rebuild_period`` rank-one operations to bound drift. Without a
    posterior the buffer is a plain reservoir (used for fast Monte-Carlo runs).
    """

    def __init__(self, budget: int, posterior: bayes.PosteriorState | None = None,
                 rebuild_period: int = 512):
        if budget < 1:
            raise ValueError("budget must be >= 1")
        if rebuild_period < 1:
            raise ValueError("rebuild_period must be >= 1")
        self.budget = budget
        self.posterior = posterior
        self.rebuild_period = rebuild_period
        self.items: list[MemoryItem] = []
        self._ids: set[int] = set()
        self.rebuilds = 0
        if posterior is not None:
            self._H = np.empty((budget, posterior.dim))
            self._Y = np.empty((budget, posterior.n_outputs))

    def __len__(self) -> int:
        return len(self.items)

    def __iter__(self):
        return iter(self.items)

    @property
    def full(self) -> bool:
        return len(self.items) >= self.budget

    @property
    def features(self) -> np.ndarray:
        """Normalized features of the current items, one per row."""
        return self._H[:len(self.items)]

    @property
    def targets(self) -> np.ndarray:
        return self._Y[:len(self.items)]

    @property
    def ids(self) -> list[int]:
        return [it.id for it in self.items]

    def _check(self, item: MemoryItem) -> None:
        if item.id in self._ids:
            raise ValueError(f"duplicate memory id {item.id}")
        expected = np.zeros_like(item.one_hot)
        if 0 <= item.label < expected.size:
            expected[item.label] = 1.0
        if not np.array_equal(expected, item.one_hot):
            raise ValueError(f"one-hot target of item {item.id} disagrees with label {item.label}")
        if self.posterior is not None:
            if item.feature.shape != (self.posterior.dim,):
                raise ValueError(f"feature has shape {item.feature.shape}, expected ({self.posterior.dim},)")
            if item.one_hot.shape != (self.posterior.n_outputs,):
                raise ValueError("one-hot width does not match the posterior's outputs")

    def _after_update(self) -> None:
        if self.posterior.ops_since_rebuild >= self.rebuild_period:
            self.rebuild_posterior()

    def insert(self, item: MemoryItem) -> None:
        if self.full:
            raise CapacityError(f"buffer holds {len(self.items)} of {self.budget} items")
        self._check(item)
        k = len(self.items)
        self.items.append(item)
        self._ids.add(item.id)
        if self.posterior is not None:
            self._H[k] = item.feature
            self._Y[k] = item.one_hot
            bayes.rank_one_add(self.posterior, item.feature, item.one_hot)
            self._after_update()

    def replace(self, index: int, item: MemoryItem) -> MemoryItem:
        """Swap the item at ``index`` for ``item``; returns the evicted item."""
        if not 0 <= index < len(self.items):
            raise IndexError(f"index {index} out of range for {len(self.items)} items")
        old = self.items[index]
        self._ids.discard(old.id)
        try:
            self._check(item)
        except ValueError:
            self._ids.add(old.id)
            raise
        self.items[index] = item
        self._ids.add(item.id)
        if self.posterior is not None:
            self._H[index] = item.feature
            self._Y[index] = item.one_hot
            try:
                bayes.rank_one_remove(self.posterior, old.feature, old.one_hot)
            except bayes.DegradedConditioningError:
                self.rebuild_posterior()
            else:
                bayes.rank_one_add(self.posterior, item.feature, item.one_hot)
                self._after_update()
        return old

    def remove(self, index: int) -> MemoryItem:
        """Delete the item at ``index`` (later items shift down)."""
        old = self.items.pop(index)
        self._ids.discard(old.id)
        if self.posterior is not None:
            n = len(self.items)
            self._H[index:n] = self._H[index + 1:n + 1]
            self._Y[index:n] = self._Y[index + 1:n + 1]
            try:
                bayes.rank_one_remove(self.posterior, old.feature, old.one_hot)
            except bayes.DegradedConditioningError:
                self.rebuild_posterior()
            else:
                self._after_update()
        return old

    def rebuild_posterior(self) -> None:
        """Recompute the posterior from the current buffer contents."""
        p = self.posterior
        fresh = bayes.rebuild(self.features, self.targets, math.sqrt(p.sigma2), p.c)
        p.inv_a, p.b, p.count, p.ops_since_rebuild = fresh.inv_a, fresh.b, fresh.count, 0
        self.rebuilds += 1

    def refresh_features(self, feature_map: Callable[[np.ndarray], np.ndarray]) -> None:
        """Recompute every item's raw and normalized feature, then rebuild."""
        refreshed = []
        for k, it in enumerate(self.items):
            raw = np.asarray(feature_map(it.raw_feature), dtype=np.float64)
            if raw.shape != it.raw_feature.shape:
                raise ValueError("feature_map must preserve the raw feature dimension")
            h = bayes.normalize_feature(raw)
            refreshed.append(MemoryItem(it.id, raw, h, it.label, it.one_hot, it.logits))
            if self.posterior is not None:
                self._H[k] = h
        self.items = refreshed
        if self.posterior is not None:
            self.rebuild_posterior()

    def class_counts(self, n_classes: int) -> np.ndarray:
        return np.bincount(np.fromiter((it.label for it in self.items), dtype=np.int64,
                                       count=len(self.items)), minlength=n_classes)
