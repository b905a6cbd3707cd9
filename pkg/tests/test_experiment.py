import math
from dataclasses import replace

import numpy as np
import pytest

from infosel.experiment import (RESULT_COLUMNS, RunSpec, append_rows, grid_search, read_rows,
                                rotate_starred, run_once, scoring_latency, selection_wall_time,
                                sweep)
from infosel.selectors import SelectorParams
from infosel.streams import StreamConfig, synth_gaussian_mixture


@pytest.fixture(scope="module")
def dataset():
    return synth_gaussian_mixture(10, 6, 60, 10.0, 0.05, seed=0)


def spec(**kw):
    base = dict(budget=30, stream=StreamConfig(batch_size=16))
    base.update(kw)
    return RunSpec(**base)


def strip_time(row):
    return replace(row, wall_ms=0.0)


@pytest.mark.parametrize("kind", ["rs", "wrs-hessian", "cbrs", "infors", "infogs", "infogs-rs"])
def test_run_is_deterministic(dataset, kind):
    a = run_once(dataset, spec(selector=kind), 3)
    b = run_once(dataset, spec(selector=kind), 3)
    assert strip_time(a.row) == strip_time(b.row)
    np.testing.assert_array_equal(a.memory_sources, b.memory_sources)
    assert a.class_counts.sum() == 30
    assert 0.0 <= a.outlier_fraction <= 1.0
    assert a.row.wall_ms > 0


def test_seeds_differ(dataset):
    a = run_once(dataset, spec(), 0)
    b = run_once(dataset, spec(), 1)
    assert not np.array_equal(a.memory_sources, b.memory_sources)


def test_infors_without_threshold_matches_rs(dataset):
    rs = run_once(dataset, spec(selector="rs"), 7)
    info = run_once(dataset, spec(selector="infors", params=SelectorParams(gamma_i=-math.inf)), 7)
    assert info.row.relearn_accuracy == rs.row.relearn_accuracy
    np.testing.assert_array_equal(info.memory_sources, rs.memory_sources)


def test_drift_run_rebuilds_and_evaluates(dataset):
    res = run_once(dataset, spec(stream=StreamConfig(batch_size=16, drift_rate=0.01)), 2)
    assert 0.0 <= res.row.relearn_accuracy <= 1.0


def test_rotate_starred():
    cfg = StreamConfig(n_tasks=5)
    assert [rotate_starred(cfg, i).starred_task for i in range(7)] == [0, 1, 2, 3, 4, 0, 1]


def test_sweep_row_count_and_resume(dataset, tmp_path):
    out = tmp_path / "rows.csv"
    rows = sweep(dataset, spec(), ["rs", "infors"], [1, 10], range(5), out=out)
    assert len(rows) == 20
    saved = read_rows(out)
    assert len(saved) == 20 and tuple(saved[0]) == RESULT_COLUMNS
    again = sweep(dataset, spec(), ["rs", "infors"], [1, 10], range(5), out=out)
    assert again == [] and len(read_rows(out)) == 20
    more = sweep(dataset, spec(), ["rs", "infors"], [1, 10], range(6), out=out)
    assert len(more) == 4 and len(read_rows(out)) == 24


def test_sweep_matches_rotated_single_runs(dataset):
    rows = sweep(dataset, spec(), ["rs"], [10], [4, 9])
    for i, (seed, row) in enumerate(zip([4, 9], rows)):
        s = spec(stream=rotate_starred(replace(spec().stream, imbalance=10), i))
        assert strip_time(row) == strip_time(run_once(dataset, s, seed).row)


def test_append_rows_writes_header_once(dataset, tmp_path):
    out = tmp_path / "rows.csv"
    row = run_once(dataset, spec(), 0).row
    append_rows(out, [row])
    append_rows(out, [row])
    lines = out.read_text().splitlines()
    assert lines[0] == ",".join(RESULT_COLUMNS) and len(lines) == 3
    assert float(read_rows(out)[0]["relearn_accuracy"]) == row.relearn_accuracy


def test_read_rows_rejects_foreign_header(tmp_path):
    out = tmp_path / "rows.csv"
    out.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        read_rows(out)


def test_timing_helpers():
    assert selection_wall_time("rs", 4, 400, n_classes=4, budget=20) > 0
    assert scoring_latency(8, 3, n_points=64, repeats=2) > 0


def test_grid_search_prefers_better_accuracy(dataset):
    grid = [SelectorParams(gamma_i=math.inf), SelectorParams(gamma_i=-math.inf)]
    best, table = grid_search([dataset], spec(selector="infors"), grid, [0, 1])
    assert len(table) == 2
    assert best == max(table, key=lambda t: t[1])[0]
