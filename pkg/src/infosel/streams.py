"""Feature datasets, their file formats, and imbalanced task streams.

Binary format (little-endian)::

    b"MSL1" | u32 n | u32 d0 | u32 K | n*d0 float32 (row-major) | n u32 labels

CSV format: a header line ``n,d0,K`` followed by ``n`` lines ``label,f1,...,f_d0``.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional, Sequence

import numpy as np

MAGIC = b"MSL1"
_HEADER = struct.Struct("<4sIII")


class DatasetFormatError(ValueError):
    """Malformed dataset file. ``offset`` is the byte (or line) position of the fault."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    n_classes: int
    outlier_ids: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or self.features.shape[0] < 1:
            raise ValueError("dataset needs at least one row of features")
        if self.labels.shape != (self.features.shape[0],):
            raise ValueError("one label per feature row required")
        if np.any(self.labels < 0) or np.any(self.labels >= self.n_classes):
            raise ValueError(f"labels must lie in [0, {self.n_classes})")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("features must be finite")

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def d0(self) -> int:
        return self.features.shape[1]

    def subset(self, index) -> "Dataset":
        index = np.asarray(index)
        keep = np.isin(self.outlier_ids, index)
        # Outlier ids are re-expressed as positions in the subset.
        pos = np.full(len(self), -1)
        pos[index] = np.arange(len(index))
        return Dataset(self.features[index], self.labels[index], self.n_classes,
                       pos[self.outlier_ids[keep]])

    def split(self, test_fraction: float, seed) -> tuple["Dataset", "Dataset"]:
        """Random train/test split, stratified by nothing but the seed."""
        perm = np.random.default_rng(seed).permutation(len(self))
        n_test = int(round(test_fraction * len(self)))
        return self.subset(np.sort(perm[n_test:])), self.subset(np.sort(perm[:n_test]))


def save_binary(dataset: Dataset, path) -> None:
    n, d0 = dataset.features.shape
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MAGIC, n, d0, dataset.n_classes))
        f.write(np.ascontiguousarray(dataset.features, dtype="<f4").tobytes())
        f.write(dataset.labels.astype("<u4").tobytes())


def load_binary(path) -> Dataset:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise DatasetFormatError(f"file has {len(data)} bytes, header needs {_HEADER.size}", len(data))
    magic, n, d0, k = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise DatasetFormatError(f"bad magic {magic!r}, expected {MAGIC!r}", 0)
    if n == 0:
        raise DatasetFormatError("header declares an empty dataset (n = 0)", 4)
    if d0 == 0 or k == 0:
        raise DatasetFormatError("header declares d0 = 0 or K = 0", 8)
    feat_end = _HEADER.size + 4 * n * d0
    expected = feat_end + 4 * n
    if len(data) != expected:
        raise DatasetFormatError(
            f"size mismatch: header implies {expected} bytes, file has {len(data)}", len(data))
    features = np.frombuffer(data, dtype="<f4", count=n * d0, offset=_HEADER.size).reshape(n, d0)
    labels = np.frombuffer(data, dtype="<u4", count=n, offset=feat_end)
    bad = np.flatnonzero(labels >= k)
    if bad.size:
        raise DatasetFormatError(f"label {labels[bad[0]]} >= K = {k}", feat_end + 4 * int(bad[0]))
    if not np.all(np.isfinite(features)):
        raw = int(np.flatnonzero(~np.isfinite(features).ravel())[0])
        raise DatasetFormatError("non-finite feature value", _HEADER.size + 4 * raw)
    return Dataset(features.astype(np.float32), labels.astype(np.int64), int(k))


def save_csv(dataset: Dataset, path) -> None:
    n, d0 = dataset.features.shape
    with open(path, "w") as f:
        f.write(f"{n},{d0},{dataset.n_classes}\n")
        for y, row in zip(dataset.labels, dataset.features):
            f.write(",".join([str(int(y))] + [repr(float(v)) for v in row]) + "\n")


def load_csv(path) -> Dataset:
    """Parse the CSV format; errors report the byte offset of the offending line."""
    data = Path(path).read_bytes()
    lines = data.split(b"\n")
    offsets = np.cumsum([0] + [len(l) + 1 for l in lines])
    try:
        n, d0, k = (int(v) for v in lines[0].split(b","))
    except ValueError:
        raise DatasetFormatError("header must be 'n,d0,K'", 0) from None
    if n <= 0:
        raise DatasetFormatError("header declares an empty dataset (n = 0)", 0)
    if d0 <= 0 or k <= 0:
        raise DatasetFormatError("header declares d0 = 0 or K = 0", 0)
    rows = lines[1:]
    if rows and not rows[-1].strip():
        rows = rows[:-1]
    if len(rows) != n:
        raise DatasetFormatError(f"header declares {n} data lines, found {len(rows)}", len(data))
    features = np.empty((n, d0), dtype=np.float32)
    labels = np.empty(n, dtype=np.int64)
    for i, line in enumerate(rows):
        off = int(offsets[i + 1])
        parts = line.split(b",")
        if len(parts) != d0 + 1:
            raise DatasetFormatError(f"line {i + 2}: expected {d0 + 1} fields, got {len(parts)}", off)
        try:
            labels[i] = int(parts[0])
            features[i] = [float(v) for v in parts[1:]]
        except ValueError:
            raise DatasetFormatError(f"line {i + 2}: unparsable field", off) from None
        if not 0 <= labels[i] < k:
            raise DatasetFormatError(f"line {i + 2}: label {labels[i]} outside [0, {k})", off)
    if not np.all(np.isfinite(features)):
        raise DatasetFormatError("non-finite feature value")
    return Dataset(features, labels, k)


def load_dataset(path) -> Dataset:
    """Dispatch on extension: ``.csv`` is text, anything else MSL1 binary."""
    return load_csv(path) if str(path).lower().endswith(".csv") else load_binary(path)


def synth_gaussian_mixture(n_classes: int, d0: int, n_per_class: int,
                           class_separation: float = 10.0, outlier_fraction: float = 0.0,
                           outlier_scale: float = 3.0, seed=0) -> Dataset:
    """Isotropic unit-variance Gaussian classes with optional label-noise outliers.

    Class centers are drawn at random and uniformly rescaled so that the
    closest pair sits exactly ``class_separation`` apart. Exactly
    ``floor(outlier_fraction * n)`` points have their label moved to a
    different, uniformly chosen class and their feature shifted by
    ``outlier_scale`` times standard normal noise; their ids are recorded in
    ``Dataset.outlier_ids``.
    """
    if not 0 <= outlier_fraction < 1:
        raise ValueError("outlier_fraction must lie in [0, 1)")
    if n_classes < 1 or d0 < 1 or n_per_class < 1:
        raise ValueError("n_classes, d0 and n_per_class must be >= 1")
    rng = np.random.default_rng(seed)
    centers = rng.standard_normal((n_classes, d0)) * class_separation / math.sqrt(2 * d0)
    if n_classes > 1:
        diff = centers[:, None, :] - centers[None, :, :]
        dist = np.sqrt((diff ** 2).sum(-1))[np.triu_indices(n_classes, 1)]
        centers *= class_separation / dist.min()
    labels = np.repeat(np.arange(n_classes), n_per_class)
    features = centers[labels] + rng.standard_normal((labels.size, d0))
    n_out = math.floor(outlier_fraction * labels.size)
    outliers = np.sort(rng.choice(labels.size, size=n_out, replace=False))
    if n_out and n_classes > 1:
        shift = rng.integers(1, n_classes, size=n_out)
        labels[outliers] = (labels[outliers] + shift) % n_classes
        features[outliers] += outlier_scale * rng.standard_normal((n_out, d0))
    return Dataset(features, labels, n_classes, outliers.astype(np.int64))


def contiguous_partition(n_classes: int, n_tasks: int) -> list[list[int]]:
    """Split ``0..K-1`` into ``n_tasks`` contiguous groups of (nearly) equal size."""
    if not 1 <= n_tasks <= n_classes:
        raise ValueError("need 1 <= n_tasks <= n_classes")
    return [g.tolist() for g in np.array_split(np.arange(n_classes), n_tasks)]


@dataclass
class StreamConfig:
    n_tasks: int = 5
    classes_per_task: Optional[Sequence[Sequence[int]]] = None
    base_epochs: int = 1
    imbalance: float = 1
    starred_task: Optional[int] = None
    batch_size: int = 32
    seed: int = 0
    drift_rate: float = 0.0

    def partition(self, n_classes: int) -> list[list[int]]:
        groups = ([list(g) for g in self.classes_per_task] if self.classes_per_task is not None
                  else contiguous_partition(n_classes, self.n_tasks))
        flat = sorted(c for g in groups for c in g)
        if len(groups) != self.n_tasks or flat != list(range(n_classes)):
            raise ValueError("classes_per_task must partition all classes into n_tasks groups")
        return groups

    def epochs(self, task: int) -> int:
        if task == self.starred_task:
            return int(round(self.base_epochs * self.imbalance))
        return self.base_epochs

    def validate(self, n_classes: int) -> None:
        if self.base_epochs < 1 or self.batch_size < 1 or self.imbalance < 1:
            raise ValueError("base_epochs, batch_size must be >= 1 and imbalance >= 1")
        if self.starred_task is not None and not 0 <= self.starred_task < self.n_tasks:
            raise ValueError("starred_task must index a task")
        if self.drift_rate < 0:
            raise ValueError("drift_rate must be non-negative")
        self.partition(n_classes)


@dataclass
class Batch:
    """``ids`` are stream positions (unique over the stream); ``source`` holds
    the dataset row of each item."""

    features: np.ndarray
    labels: np.ndarray
    ids: np.ndarray
    source: np.ndarray
    task_id: int
    epoch_id: int
    step: int

    def __len__(self) -> int:
        return len(self.labels)


def make_task_stream(dataset: Dataset, config: StreamConfig, rng=None) -> Iterator[Batch]:
    """Yield batches task by task; each epoch is an independent shuffle.

    ``rng`` defaults to a generator seeded with ``config.seed``. With a
    positive ``drift_rate`` the features of the batch at step ``t`` are passed
    through :func:`feature_drift` at ``t``.
    """
    config.validate(dataset.n_classes)
    rng = np.random.default_rng(config.seed) if rng is None else rng
    step = pos = 0
    for t, group in enumerate(config.partition(dataset.n_classes)):
        idx = np.flatnonzero(np.isin(dataset.labels, group))
        for e in range(config.epochs(t)):
            order = rng.permutation(idx)
            for start in range(0, len(order), config.batch_size):
                sel = order[start:start + config.batch_size]
                feats = dataset.features[sel].astype(np.float64)
                if config.drift_rate > 0:
                    feats = feature_drift(feats, step, config.drift_rate)
                ids = np.arange(pos, pos + len(sel))
                yield Batch(feats, dataset.labels[sel], ids, sel, t, e, step)
                step += 1
                pos += len(sel)


def count_batches(dataset: Dataset, config: StreamConfig) -> int:
    total = 0
    for t, group in enumerate(config.partition(dataset.n_classes)):
        size = int(np.isin(dataset.labels, group).sum())
        total += config.epochs(t) * math.ceil(size / config.batch_size)
    return total


#: Amplitude of the log-scale oscillation in :func:`feature_drift`.
DRIFT_SCALE_AMPLITUDE = 0.1


def _drift_params(t, drift_rate):
    theta = t * drift_rate
    return theta, math.exp(DRIFT_SCALE_AMPLITUDE * math.sin(theta))


def _rotate_pairs(x, theta):
    x = np.array(x, dtype=np.float64)
    d = x.shape[-1] - x.shape[-1] % 2
    a, b = x[..., 0:d:2].copy(), x[..., 1:d:2].copy()
    cos, sin = math.cos(theta), math.sin(theta)
    x[..., 0:d:2] = cos * a - sin * b
    x[..., 1:d:2] = sin * a + cos * b
    return x


def feature_drift(raw_feature, t, drift_rate: float) -> np.ndarray:
    """Rotate coordinate pairs by ``theta = t * drift_rate`` and scale by
    ``exp(0.1 * sin(theta))``.

    The norm therefore stays within a factor ``[e^-0.1, e^0.1]`` of the input
    and ``t = 0`` or ``drift_rate = 0`` is the identity. An odd trailing
    coordinate is only scaled.
    """
    if drift_rate < 0:
        raise ValueError("drift_rate must be non-negative")
    theta, scale = _drift_params(t, drift_rate)
    return scale * _rotate_pairs(raw_feature, theta)


def feature_drift_inverse(raw_feature, t, drift_rate: float) -> np.ndarray:
    theta, scale = _drift_params(t, drift_rate)
    return _rotate_pairs(np.asarray(raw_feature, dtype=np.float64) / scale, -theta)
