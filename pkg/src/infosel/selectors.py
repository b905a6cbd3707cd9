"""Online memory selection strategies.

Reservoir primitives (:func:`rs_observe`, :func:`wrs_observe`,
:func:`cbrs_observe`) act on one item at a time. The selector classes drive a
:class:`~infosel.memory.Memory` over whole batches and record when the memory
changed:

==============  =========================================================
``rs``          reservoir sampling
``wrs-hessian`` weighted reservoir sampling, output-space Hessian weights
``cbrs``        class-balanced reservoir sampling
``infors``      reservoir sampling over points passing a criterion threshold
``infogs``      greedy replacement of the least informative memory point
``infogs-rs``   greedy replacement gated by a reservoir acceptance draw
==============  =========================================================

All random draws go through ``rng.random()`` so any object with that method
(e.g. :class:`numpy.random.Generator`) can drive a selector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import bayes
from .memory import Memory, MemoryItem, make_item


@dataclass
class RunningMoments:
    """Welford accumulator; ``variance`` uses the count as divisor."""

    count: int = 0
    mean: float = 0.0
    m2: float = 0.0

    @property
    def variance(self) -> float:
        return self.m2 / self.count if self.count >= 2 else 0.0

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)

    def update(self, x: float) -> "RunningMoments":
        self.count += 1
        delta = x - self.mean
        self.mean += delta / self.count
        self.m2 += delta * (x - self.mean)
        return self


def moments_update(m: RunningMoments, x: float) -> RunningMoments:
    if not math.isfinite(x):
        raise ValueError(f"moment update with non-finite value {x}")
    return m.update(x)


def threshold(m: RunningMoments, gamma: float) -> float:
    """``mean + gamma * std``; ``-inf`` until two values have been seen."""
    if m.count < 2 or gamma == -math.inf:
        return -math.inf
    if gamma == math.inf:
        return math.inf
    return m.mean + gamma * m.std


@dataclass
class SelectorParams:
    eta: float = 1.0
    gamma_i: float = 0.0
    gamma_l: float = 0.0
    criterion: str = "mic"

    def __post_init__(self):
        if self.eta < 0:
            raise ValueError("eta must be non-negative")
        if self.criterion not in bayes.CRITERIA:
            raise ValueError(f"criterion must be one of {bayes.CRITERIA}")


def _draw_index(rng, n: int) -> int:
    """Uniform integer in ``1..n``."""
    return min(int(rng.random() * n), n - 1) + 1


def rs_observe(memory: Memory, n: int, item: MemoryItem, rng):
    """One reservoir-sampling step.

    Returns ``(n + 1, slot)`` where ``slot`` is the index written (inserted or
    replaced) or ``None`` when the item was discarded.
    """
    if not memory.full:
        memory.insert(item)
        return n + 1, len(memory) - 1
    i = _draw_index(rng, n + 1)
    if i <= memory.budget:
        memory.replace(i - 1, item)
        return n + 1, i - 1
    return n + 1, None


def wrs_observe(memory: Memory, wbar: float, item: MemoryItem, weight: float, rng):
    """One weighted reservoir step; returns ``(wbar, slot)``."""
    if not (weight >= 0 and math.isfinite(weight)):
        raise ValueError(f"weight must be finite and non-negative, got {weight}")
    wbar += weight
    if not memory.full:
        memory.insert(item)
        return wbar, len(memory) - 1
    w_hat = min(weight / wbar, 1.0 / memory.budget) if wbar > 0 else 0.0
    # Categorical over M slots of mass w_hat each plus a "discard" outcome.
    u = rng.random()
    if u < memory.budget * w_hat:
        slot = min(int(u / w_hat), memory.budget - 1)
        memory.replace(slot, item)
        return wbar, slot
    return wbar, None


def hessian_weight(p) -> float:
    """Total output-space Hessian ``1 - sum p_k^2`` of a probability vector."""
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1 or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-6:
        raise ValueError("p must be a probability vector")
    return float(1.0 - p @ p)


def cbrs_observe(memory: Memory, class_counts: np.ndarray, item: MemoryItem, rng):
    """One class-balanced reservoir step.

    ``class_counts[k]`` is the number of class-``k`` stream items seen so far
    and is updated in place. The class to evict from is the one with the most
    items in memory. Returns the slot written or ``None``.
    """
    y = item.label
    if not memory.full:
        memory.insert(item)
        class_counts[y] += 1
        return len(memory) - 1
    labels = np.fromiter((it.label for it in memory.items), dtype=np.int64, count=len(memory))
    in_memory = np.bincount(labels, minlength=len(class_counts))
    k = int(np.argmax(in_memory))
    if in_memory[k] > in_memory[y]:
        slots = np.flatnonzero(labels == k)
        slot = int(slots[_draw_index(rng, len(slots)) - 1])
        memory.replace(slot, item)
        class_counts[y] += 1
        return slot
    slots = np.flatnonzero(labels == y)
    i = _draw_index(rng, class_counts[y] + 1)
    class_counts[y] += 1
    if i <= len(slots):
        slot = int(slots[i - 1])
        memory.replace(slot, item)
        return slot
    return None


def softmax(z) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


class Selector:
    """Base class: owns a memory, a generator and the stream-position bookkeeping.

    Subclasses implement :meth:`observe_batch`. ``update_steps`` lists the
    stream positions at which a full memory was modified and
    ``count_trace`` the reservoir count after each batch.
    """

    kind = "base"

    def __init__(self, memory: Memory, n_classes: int, rng=None,
                 params: SelectorParams | None = None):
        self.memory = memory
        self.n_classes = n_classes
        self.rng = np.random.default_rng() if rng is None else rng
        self.params = params or SelectorParams()
        self.n = 0
        self.seen = 0
        self.update_steps: list[int] = []
        self.count_trace: list[tuple[int, int]] = []

    def _items(self, batch):
        H = bayes.normalize_feature(batch.features)
        return H, bayes.one_hot(batch.labels, self.n_classes)

    def _item(self, batch, H, j) -> MemoryItem:
        return make_item(batch.ids[j], batch.features[j], batch.labels[j], self.n_classes,
                         feature=H[j])

    def _record(self, was_full: bool, slot) -> None:
        if was_full and slot is not None:
            self.update_steps.append(self.seen)

    def observe_batch(self, batch) -> None:
        raise NotImplementedError

    def _end_batch(self) -> None:
        self.count_trace.append((self.seen, self.n))


class ReservoirSampler(Selector):
    kind = "rs"

    def observe_batch(self, batch):
        H = bayes.normalize_feature(batch.features)
        for j in range(len(batch.labels)):
            full = self.memory.full
            self.n, slot = rs_observe(self.memory, self.n, self._item(batch, H, j), self.rng)
            self._record(full, slot)
            self.seen += 1
        self._end_batch()


class WeightedReservoirSampler(Selector):
    """WRS with weights ``1 - sum p^2`` where ``p`` is a softmax over the
    scorer's predictive means."""

    kind = "wrs-hessian"

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.wbar = 0.0

    def weights(self, H) -> np.ndarray:
        means = H @ self.memory.posterior.mean_weights()
        p = softmax(means)
        return 1.0 - np.einsum("ij,ij->i", p, p)

    def observe_batch(self, batch):
        H = bayes.normalize_feature(batch.features)
        w = None
        for j in range(len(batch.labels)):
            if w is None:
                w = np.zeros(len(H))
                w[j:] = self.weights(H[j:])
            full = self.memory.full
            self.wbar, slot = wrs_observe(self.memory, self.wbar, self._item(batch, H, j),
                                          max(float(w[j]), 0.0), self.rng)
            if slot is not None:
                w = None
            self._record(full, slot)
            self.n += 1
            self.seen += 1
        self._end_batch()


class ClassBalancedSampler(Selector):
    kind = "cbrs"

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.class_counts = np.zeros(self.n_classes, dtype=np.int64)

    def observe_batch(self, batch):
        H = bayes.normalize_feature(batch.features)
        for j in range(len(batch.labels)):
            full = self.memory.full
            slot = cbrs_observe(self.memory, self.class_counts, self._item(batch, H, j), self.rng)
            self._record(full, slot)
            self.n += 1
            self.seen += 1
        self._end_batch()


class InfoRS(Selector):
    """Reservoir sampling restricted to points whose criterion clears
    ``mean + gamma_i * std`` of the criterion values seen so far."""

    kind = "infors"

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.moments_i = RunningMoments()
        self.passed = 0

    def observe_batch(self, batch):
        p = self.params
        H, Y = self._items(batch)
        crit = np.empty(len(H))
        stale = True
        for j in range(len(H)):
            if stale:
                # Scores are exact for the current buffer; refresh only after it changes.
                crit[j:], _ = bayes.score(self.memory.posterior, H[j:], Y[j:], p.criterion, p.eta)
                stale = False
            c = float(crit[j])
            full = self.memory.full
            if not full or c >= threshold(self.moments_i, p.gamma_i):
                self.passed += 1
                self.n, slot = rs_observe(self.memory, self.n, self._item(batch, H, j), self.rng)
                stale = slot is not None
                self._record(full, slot)
            moments_update(self.moments_i, c)
            self.seen += 1
        self._end_batch()


class InfoGS(Selector):
    """Greedy selection with information-improvement and learnability thresholds.

    Each pass over a batch picks the most informative remaining candidate
    among those whose learnability clears its threshold, finds the memory
    point with the smallest leave-one-out criterion against
    ``memory + candidate``, and swaps them when the candidate's criterion
    exceeds that point's by the running threshold. The first failed
    improvement test ends the batch. Both moment trackers are then updated
    with the whole batch scored against the buffer as it was when the batch
    arrived.
    """

    kind = "infogs"

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.moments_i = RunningMoments()
        self.moments_l = RunningMoments()

    def _accept(self) -> bool:
        return True

    def observe_batch(self, batch):
        p = self.params
        mem = self.memory
        H, Y = self._items(batch)
        ids = np.asarray(batch.ids)
        crit0, learn0 = bayes.score(mem.posterior, H, Y, p.criterion, p.eta)
        remaining = list(range(len(H)))
        for _ in range(len(H)):
            if not remaining:
                break
            if not mem.full:
                j = remaining.pop(0)
                mem.insert(self._item(batch, H, j))
                self.n += 1
                continue
            rem = np.asarray(remaining)
            crit, learn = bayes.score(mem.posterior, H[rem], Y[rem], p.criterion, p.eta)
            ok = learn >= threshold(self.moments_l, p.gamma_l)
            if not ok.any():
                break
            cand = rem[ok]
            best = np.flatnonzero(crit[ok] == crit[ok].max())
            pick = best[np.argmin(ids[cand[best]])]
            b = int(cand[pick])
            b_crit = float(crit[ok][pick])
            loo = bayes.memory_loo_scores(mem.posterior, mem.features, mem.targets, H[b], Y[b],
                                          p.criterion, p.eta)
            low = np.flatnonzero(loo == loo.min())
            m = int(low[np.argmin(np.asarray(mem.ids)[low])])
            if b_crit < loo[m] + threshold(self.moments_i, p.gamma_i):
                break
            remaining.remove(b)
            if not self._accept():
                continue
            mem.replace(m, self._item(batch, H, b))
            self.update_steps.append(self.seen + b)
        for c, l in zip(crit0, learn0):
            moments_update(self.moments_i, float(c))
            moments_update(self.moments_l, float(l))
        self.seen += len(H)
        self._end_batch()


class InfoGSRS(InfoGS):
    """InfoGS whose threshold-passing candidates must also win a reservoir draw."""

    kind = "infogs-rs"

    def _accept(self) -> bool:
        i = _draw_index(self.rng, self.n + 1)
        self.n += 1
        return i <= self.memory.budget


SELECTORS = {cls.kind: cls for cls in
             (ReservoirSampler, WeightedReservoirSampler, ClassBalancedSampler,
              InfoRS, InfoGS, InfoGSRS)}


def make_selector(kind: str, memory: Memory, n_classes: int, rng=None,
                  params: SelectorParams | None = None) -> Selector:
    try:
        cls = SELECTORS[kind]
    except KeyError:
        raise ValueError(f"unknown selector {kind!r}; choose from {sorted(SELECTORS)}") from None
    return cls(memory, n_classes, rng, params)
