import math
import struct

import numpy as np
import pytest

from infosel.evaluate import relearn_accuracy
from infosel.streams import (DatasetFormatError, Dataset, StreamConfig, contiguous_partition,
                             count_batches, feature_drift, feature_drift_inverse, load_binary,
                             load_csv, load_dataset, make_task_stream, save_binary, save_csv,
                             synth_gaussian_mixture)
from infosel import bayes


def small_dataset(seed=0, n=20, d0=3, k=4):
    rng = np.random.default_rng(seed)
    return Dataset(rng.standard_normal((n, d0)), rng.integers(0, k, n), k)


# file formats

def test_binary_round_trip_is_bit_identical(tmp_path):
    ds = small_dataset()
    path = tmp_path / "d.msl"
    save_binary(ds, path)
    back = load_binary(path)
    assert back.features.tobytes() == ds.features.tobytes()
    np.testing.assert_array_equal(back.labels, ds.labels)
    assert back.n_classes == 4


def test_binary_layout(tmp_path):
    ds = Dataset([[1.5, -2.0]], [1], 3)
    path = tmp_path / "d.msl"
    save_binary(ds, path)
    raw = path.read_bytes()
    assert raw[:4] == b"MSL1"
    assert struct.unpack("<III", raw[4:16]) == (1, 2, 3)
    assert struct.unpack("<ff", raw[16:24]) == (1.5, -2.0)
    assert struct.unpack("<I", raw[24:]) == (1,)


def test_csv_round_trip(tmp_path):
    ds = small_dataset(1)
    path = tmp_path / "d.csv"
    save_csv(ds, path)
    back = load_dataset(path)
    assert back.features.tobytes() == ds.features.tobytes()
    np.testing.assert_array_equal(back.labels, ds.labels)


def write(tmp_path, data, name="bad.msl"):
    p = tmp_path / name
    p.write_bytes(data)
    return p


def test_bad_magic(tmp_path):
    ds = small_dataset()
    good = write(tmp_path, b"", "good.msl")
    save_binary(ds, good)
    p = write(tmp_path, b"MSL2" + good.read_bytes()[4:])
    with pytest.raises(DatasetFormatError) as err:
        load_binary(p)
    assert err.value.offset == 0


def test_empty_dataset_header(tmp_path):
    with pytest.raises(DatasetFormatError, match="empty"):
        load_binary(write(tmp_path, struct.pack("<4sIII", b"MSL1", 0, 3, 2)))


def test_truncated_body_names_lengths(tmp_path):
    good = write(tmp_path, b"", "good.msl")
    save_binary(small_dataset(), good)
    data = good.read_bytes()[:-9]
    with pytest.raises(DatasetFormatError, match=f"{len(data) + 9}.*{len(data)}"):
        load_binary(write(tmp_path, data))


def test_trailing_garbage_rejected(tmp_path):
    good = write(tmp_path, b"", "good.msl")
    save_binary(small_dataset(), good)
    with pytest.raises(DatasetFormatError):
        load_binary(write(tmp_path, good.read_bytes() + b"\0"))


def test_label_overflow(tmp_path):
    header = struct.pack("<4sIII", b"MSL1", 2, 1, 3)
    body = struct.pack("<ff", 0.0, 1.0) + struct.pack("<II", 1, 3)
    with pytest.raises(DatasetFormatError) as err:
        load_binary(write(tmp_path, header + body))
    assert err.value.offset == 16 + 8 + 4


def test_short_header(tmp_path):
    with pytest.raises(DatasetFormatError):
        load_binary(write(tmp_path, b"MSL1\0\0"))


def test_non_finite_feature_rejected(tmp_path):
    header = struct.pack("<4sIII", b"MSL1", 1, 2, 2)
    body = struct.pack("<ff", 0.0, math.nan) + struct.pack("<I", 0)
    with pytest.raises(DatasetFormatError):
        load_binary(write(tmp_path, header + body))


@pytest.mark.parametrize("text", ["2,1,2\n0,1.0\n", "1,1,2\n5,1.0\n", "1,2,2\n0,1.0\n",
                                  "0,1,2\n", "x\n", "1,1,2\n0,abc\n"])
def test_csv_malformed(tmp_path, text):
    p = tmp_path / "bad.csv"
    p.write_text(text)
    with pytest.raises(DatasetFormatError):
        load_csv(p)


def test_csv_error_reports_line_offset(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("2,1,3\n0,1.0\n7,2.0\n")
    with pytest.raises(DatasetFormatError) as err:
        load_csv(p)
    assert err.value.offset == len("2,1,3\n0,1.0\n")


def test_dataset_invariants():
    with pytest.raises(ValueError):
        Dataset(np.zeros((2, 2)), [0, 2], 2)
    with pytest.raises(ValueError):
        Dataset(np.zeros((0, 2)), np.zeros(0), 2)
    with pytest.raises(ValueError):
        Dataset([[np.inf]], [0], 1)


# synthetic mixture

def test_mixture_is_deterministic():
    a = synth_gaussian_mixture(4, 3, 10, seed=7)
    b = synth_gaussian_mixture(4, 3, 10, seed=7)
    assert a.features.tobytes() == b.features.tobytes()
    np.testing.assert_array_equal(a.labels, b.labels)


def test_mixture_outlier_count_and_relabelling():
    clean = synth_gaussian_mixture(10, 16, 500, 10.0, 0.0, seed=3)
    noisy = synth_gaussian_mixture(10, 16, 500, 10.0, 0.05, seed=3)
    assert len(noisy.outlier_ids) == math.floor(0.05 * 5000)
    assert np.all(noisy.labels[noisy.outlier_ids] != np.repeat(np.arange(10), 500)[noisy.outlier_ids])
    assert len(clean.outlier_ids) == 0


def test_mixture_rejects_bad_fraction():
    with pytest.raises(ValueError):
        synth_gaussian_mixture(3, 2, 5, outlier_fraction=1.0)


def test_mixture_center_separation():
    ds = synth_gaussian_mixture(6, 8, 4000, 10.0, seed=1)
    centers = np.array([ds.features[ds.labels == k].mean(0) for k in range(6)])
    dist = np.linalg.norm(centers[:, None] - centers[None], axis=-1)[np.triu_indices(6, 1)]
    assert dist.min() >= 10.0 - 0.2


def test_mixture_is_separable_by_ridge_relearn():
    ds = synth_gaussian_mixture(10, 16, 500, 10.0, seed=2)
    train, test = ds.split(0.2, 0)
    H = bayes.normalize_feature(train.features)
    W = bayes.rebuild(H, bayes.one_hot(train.labels, 10), 0.3, 0.1).mean_weights()
    assert relearn_accuracy(W, test) >= 0.99


def test_split_and_subset_keep_outliers():
    ds = synth_gaussian_mixture(3, 2, 50, 5.0, 0.1, seed=4)
    train, test = ds.split(0.2, 0)
    assert len(train) + len(test) == len(ds)
    assert len(train.outlier_ids) + len(test.outlier_ids) == len(ds.outlier_ids)
    assert len(test) == 30


# task streams

def test_contiguous_partition():
    assert contiguous_partition(10, 5) == [[0, 1], [2, 3], [4, 5], [6, 7], [8, 9]]
    with pytest.raises(ValueError):
        contiguous_partition(3, 4)


def five_task_dataset():
    labels = np.repeat(np.arange(10), 50)
    return Dataset(np.arange(500.0)[:, None], labels, 10)


def test_stream_batch_count_and_task_order():
    ds = five_task_dataset()
    cfg = StreamConfig(n_tasks=5, batch_size=10, seed=1)
    stream = list(make_task_stream(ds, cfg))
    assert len(stream) == 50 == count_batches(ds, cfg)
    for b in stream:
        assert set(b.labels) <= {2 * b.task_id, 2 * b.task_id + 1}
    assert [b.task_id for b in stream] == sorted(b.task_id for b in stream)
    assert np.concatenate([b.ids for b in stream]).tolist() == list(range(500))


def test_starred_task_gets_r_times_batches():
    ds = five_task_dataset()
    cfg = StreamConfig(n_tasks=5, batch_size=10, imbalance=10, starred_task=2)
    per_task = np.bincount([b.task_id for b in make_task_stream(ds, cfg)])
    assert per_task.tolist() == [10, 10, 100, 10, 10]
    sources = np.concatenate([b.source for b in make_task_stream(ds, cfg)])
    counts = np.bincount(sources, minlength=500)
    assert set(counts[ds.labels // 2 == 2]) == {10} and set(counts[ds.labels // 2 != 2]) == {1}


def test_stream_determinism_and_epoch_shuffles():
    ds = five_task_dataset()
    cfg = StreamConfig(n_tasks=5, batch_size=7, base_epochs=2, seed=3)
    a = [b.source.tolist() for b in make_task_stream(ds, cfg)]
    b = [b.source.tolist() for b in make_task_stream(ds, cfg)]
    assert a == b
    first_task = [x for batch in a[:30] for x in batch]  # 2 epochs x 15 batches
    assert first_task[:100] != first_task[100:]
    assert sorted(first_task[:100]) == sorted(first_task[100:])


def test_stream_config_validation():
    ds = five_task_dataset()
    for bad in (StreamConfig(starred_task=5), StreamConfig(imbalance=0.5),
                StreamConfig(batch_size=0), StreamConfig(classes_per_task=[[0, 1]] * 5),
                StreamConfig(drift_rate=-1)):
        with pytest.raises(ValueError):
            list(make_task_stream(ds, bad))


def test_custom_partition():
    ds = five_task_dataset()
    groups = [[9, 0], [1, 8], [2, 7], [3, 6], [4, 5]]
    cfg = StreamConfig(classes_per_task=groups, batch_size=50)
    for b in make_task_stream(ds, cfg):
        assert set(b.labels) <= set(groups[b.task_id])


# drift

def test_drift_identity_cases():
    x = np.random.default_rng(0).standard_normal((4, 5))
    np.testing.assert_array_equal(feature_drift(x, 0, 0.4), x)
    np.testing.assert_array_equal(feature_drift(x, 123, 0.0), x)


def test_drift_inverse_and_norm_envelope():
    rng = np.random.default_rng(1)
    for _ in range(100):
        x = rng.standard_normal(7)
        t = int(rng.integers(0, 10_000))
        y = feature_drift(x, t, 0.05)
        np.testing.assert_allclose(feature_drift_inverse(y, t, 0.05), x, atol=1e-10)
        ratio = np.linalg.norm(y) / np.linalg.norm(x)
        assert math.exp(-0.1) - 1e-12 <= ratio <= math.exp(0.1) + 1e-12


def test_drifted_stream_features():
    ds = five_task_dataset()
    ds = Dataset(np.tile(ds.features, (1, 2)), ds.labels, 10)
    cfg = StreamConfig(batch_size=10, drift_rate=0.1)
    for b in make_task_stream(ds, cfg):
        np.testing.assert_allclose(b.features, feature_drift(ds.features[b.source], b.step, 0.1))
