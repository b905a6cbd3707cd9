"""Reproducible selection runs: stream a dataset through a selector and evaluate the memory."""

from __future__ import annotations

import csv
import itertools
import math
import os
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Iterable, Optional, Sequence

import numpy as np

from . import bayes
from .evaluate import class_variance, relearn_accuracy, relearn_fit
from .memory import Memory
from .selectors import SelectorParams, make_selector
from .streams import (Dataset, StreamConfig, feature_drift, feature_drift_inverse,
                      make_task_stream, synth_gaussian_mixture)

RESULT_COLUMNS = ("selector", "seed", "imbalance", "budget", "eta", "gamma_i", "gamma_l",
                  "relearn_accuracy", "class_variance", "reservoir_n", "wall_ms")
_KEY_COLUMNS = RESULT_COLUMNS[:7]


@dataclass
class RunSpec:
    selector: str = "rs"
    params: SelectorParams = field(default_factory=SelectorParams)
    stream: StreamConfig = field(default_factory=StreamConfig)
    budget: int = 200
    sigma: float = 0.3
    jitter: float = 0.1
    rebuild_period: int = 512
    test_fraction: float = 0.2
    seeds: Sequence[int] = (0,)


@dataclass
class ResultRow:
    selector: str
    seed: int
    imbalance: float
    budget: int
    eta: float
    gamma_i: float
    gamma_l: float
    relearn_accuracy: float
    class_variance: float
    reservoir_n: int
    wall_ms: float


@dataclass
class RunResult:
    row: ResultRow
    class_counts: np.ndarray
    outlier_fraction: float
    count_trace: list
    update_steps: list
    memory_sources: np.ndarray


def seed_streams(seed: int):
    """Independent generators for the train/test split, stream shuffling and the selector."""
    split, stream, selector = np.random.SeedSequence(seed).spawn(3)
    return (np.random.default_rng(split), np.random.default_rng(stream),
            np.random.default_rng(selector))


def run_once(dataset: Dataset, spec: RunSpec, seed: int,
             test: Optional[Dataset] = None) -> RunResult:
    """One run of ``spec`` with ``seed``.

    Without an explicit ``test`` set the dataset is split by the seed. Only
    selection and scoring (including feature refreshes) count towards
    ``wall_ms``.
    """
    split_rng, stream_rng, sel_rng = seed_streams(seed)
    if test is None:
        train, test = dataset.split(spec.test_fraction, split_rng)
    else:
        train = dataset
    k = dataset.n_classes
    config = replace(spec.stream, seed=seed)
    posterior = bayes.init_posterior(train.d0, k, spec.sigma, jitter=spec.jitter)
    memory = Memory(spec.budget, posterior, spec.rebuild_period)
    selector = make_selector(spec.selector, memory, k, sel_rng, spec.params)

    sources = []
    rate = config.drift_rate
    last_step = 0
    wall = 0.0
    for batch in make_task_stream(train, config, stream_rng):
        sources.append(batch.source)
        t0 = time.perf_counter()
        if rate > 0 and len(memory) and batch.step != last_step:
            prev, now = last_step, batch.step
            memory.refresh_features(
                lambda r: feature_drift(feature_drift_inverse(r, prev, rate), now, rate))
        selector.observe_batch(batch)
        wall += time.perf_counter() - t0
        last_step = batch.step

    sources = np.concatenate(sources) if sources else np.zeros(0, dtype=np.int64)
    mem_sources = sources[np.asarray(memory.ids, dtype=np.int64)]
    if rate > 0:
        test = Dataset(feature_drift(test.features.astype(np.float64), last_step, rate),
                       test.labels, test.n_classes)
    acc = relearn_accuracy(relearn_fit(memory, spec.jitter), test)
    counts = memory.class_counts(k)
    outlier_frac = float(np.isin(mem_sources, train.outlier_ids).mean()) if len(memory) else 0.0
    p = spec.params
    row = ResultRow(spec.selector, seed, config.imbalance, spec.budget, p.eta, p.gamma_i,
                    p.gamma_l, acc, class_variance(counts), selector.n, 1e3 * wall)
    return RunResult(row, counts, outlier_frac, selector.count_trace, selector.update_steps,
                     mem_sources)


def rotate_starred(config: StreamConfig, seed_index: int) -> StreamConfig:
    """Starred task cycles through the tasks as the seed index advances."""
    return replace(config, starred_task=seed_index % config.n_tasks)


def read_rows(path) -> list[dict]:
    if not os.path.exists(path) or os.path.getsize(path) == 0:
        return []
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if tuple(reader.fieldnames or ()) != RESULT_COLUMNS:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        return list(reader)


def append_rows(path, rows: Iterable[ResultRow]) -> None:
    """Append rows, writing the fixed header first if the file is new."""
    new = not os.path.exists(path) or os.path.getsize(path) == 0
    with open(path, "a", newline="") as f:
        w = csv.writer(f)
        if new:
            w.writerow(RESULT_COLUMNS)
        for r in rows:
            d = asdict(r)
            w.writerow([_fmt(d[c]) for c in RESULT_COLUMNS])


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def row_key_from_csv(d: dict) -> tuple:
    return tuple(_fmt(_parse(d[c])) for c in _KEY_COLUMNS)


def _parse(v: str):
    for cast in (int, float):
        try:
            return cast(v)
        except ValueError:
            pass
    return v


def sweep(dataset: Dataset, base: RunSpec, selectors: Sequence[str],
          imbalances: Sequence[float], seeds: Sequence[int], out=None,
          test: Optional[Dataset] = None) -> list[ResultRow]:
    """Cross product selectors x imbalances x seeds.

    The starred task rotates with the seed's position in ``seeds``. When
    ``out`` names an existing result file, rows whose key is already present
    are skipped, so an interrupted sweep can be resumed.
    """
    done = {row_key_from_csv(d) for d in read_rows(out)} if out else set()
    rows = []
    for kind, r, (i, seed) in itertools.product(selectors, imbalances, enumerate(seeds)):
        stream = rotate_starred(replace(base.stream, imbalance=r), i)
        spec = replace(base, selector=kind, stream=stream)
        p = spec.params
        key = tuple(_fmt(v) for v in (kind, seed, r, spec.budget, p.eta, p.gamma_i, p.gamma_l))
        if key in done:
            continue
        row = run_once(dataset, spec, seed, test).row
        rows.append(row)
        if out:
            append_rows(out, [row])
        done.add(key)
    return rows


def selection_wall_time(kind: str, d0: int, points: int, n_classes: int = 10,
                        budget: int = 200, batch_size: int = 32, seed: int = 0,
                        params: SelectorParams | None = None) -> float:
    """Seconds spent selecting from a synthetic ``d0``-dimensional stream of ``points`` points."""
    per_class = max(1, points // n_classes)
    data = synth_gaussian_mixture(n_classes, d0, per_class, 10.0, seed=seed)
    spec = RunSpec(selector=kind, params=params or SelectorParams(), budget=budget,
                   stream=StreamConfig(n_tasks=min(5, n_classes), batch_size=batch_size))
    return run_once(data, spec, seed, test=data).row.wall_ms / 1e3


def scoring_latency(d0: int, n_classes: int = 10, n_points: int = 4096, memory_size: int = 200,
                    repeats: int = 5, criterion: str = "mic", seed: int = 0) -> float:
    """Best-of-``repeats`` seconds per point for batched criterion scoring."""
    rng = np.random.default_rng(seed)
    H = bayes.normalize_feature(rng.standard_normal((memory_size, d0)))
    Y = bayes.one_hot(rng.integers(0, n_classes, memory_size), n_classes)
    state = bayes.rebuild(H, Y, 0.3, 0.1)
    Hs = bayes.normalize_feature(rng.standard_normal((n_points, d0)))
    Ys = bayes.one_hot(rng.integers(0, n_classes, n_points), n_classes)
    best = math.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        bayes.score(state, Hs, Ys, criterion, 1.0)
        best = min(best, time.perf_counter() - t0)
    return best / n_points



def grid_search(datasets: Sequence[Dataset], base: RunSpec, grid: Iterable[SelectorParams],
                seeds: Sequence[int]) -> tuple[SelectorParams, list[tuple[SelectorParams, float]]]:
    """Pick the parameters with the best mean relearn accuracy on validation datasets.

    Every ``(dataset, seed)`` pair is run with the starred task rotating over
    the seed index. Ties go to the earlier grid entry.
    """
    table = []
    for params in grid:
        accs = [run_once(ds, replace(base, params=params,
                                     stream=rotate_starred(base.stream, i)), seed).row.relearn_accuracy
                for ds in datasets for i, seed in enumerate(seeds)]
        table.append((params, float(np.mean(accs))))
    best = max(table, key=lambda t: t[1])
    return best[0], table
