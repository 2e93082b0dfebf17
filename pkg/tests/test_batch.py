import csv
import json

import numpy as np
import pytest

from intersim.batch import (ConditionGrid, OutcomeTable, derive_seed,
                            emit_outputs, run_batch, wilson_interval)
from intersim.config import SimConfig, to_dict


def test_wilson_examples():
    lo, hi = wilson_interval(0, 50)
    assert lo == 0.0
    lo, hi = wilson_interval(25, 50, 1.96)
    assert lo == pytest.approx(0.3664, abs=5e-4)
    assert hi == pytest.approx(0.6336, abs=5e-4)
    lo, hi = wilson_interval(50, 50)
    assert hi == 1.0


def test_wilson_contains_point_estimate_exhaustive():
    for n in range(1, 101):
        for k in range(n + 1):
            lo, hi = wilson_interval(k, n)
            assert lo <= k / n <= hi
            assert 0.0 <= lo <= hi <= 1.0


def test_wilson_rejects_bad_inputs():
    with pytest.raises(ValueError):
        wilson_interval(0, 0)
    with pytest.raises(ValueError):
        wilson_interval(5, 3)


def test_derive_seed_stable_and_distinct():
    a = derive_seed(7, "baseline", 2, 3)
    assert a == derive_seed(7, "baseline", 2, 3)
    assert a != derive_seed(7, "baseline", 2, 4)
    assert a != derive_seed(8, "baseline", 2, 3)
    assert 0 <= a < 2 ** 63


def test_seed_paired_across_regimes():
    # paired-seed comparisons need identical run seeds per (condition, rep)
    assert derive_seed(5, "baseline", 1, 2) == derive_seed(5, "norms", 1, 2)


def fast_cfg():
    cfg = SimConfig()
    cfg.belief.particles = 16
    cfg.planner.cem_samples = 16
    cfg.planner.cem_iters = 2
    cfg.planner.extension_samples = 5
    cfg.planner.planning_particles = 8
    cfg.scenario.max_time = 6.0
    return cfg


@pytest.fixture(scope="module")
def small_batch():
    grid = ConditionGrid(regime="baseline", delta_d0=(-25.0, 0.0), reps=3)
    table, raw = run_batch(grid, base_seed=11, base_cfg=fast_cfg(), jobs=2)
    return grid, table, raw


def test_batch_shapes_and_proportions(small_batch):
    grid, table, raw = small_batch
    assert len(raw) == 6
    for dd0 in grid.delta_d0:
        props = [table.proportion(dd0, k)
                 for k in ("a_first", "b_first", "deadlock", "collision")]
        assert sum(props) == pytest.approx(1.0)
    rows = table.rows()
    assert len(rows) == 2 * 4


def test_batch_determinism(small_batch):
    grid, table, raw = small_batch
    table2, raw2 = run_batch(grid, base_seed=11, base_cfg=fast_cfg(), jobs=1)
    assert table2.counts == table.counts
    assert [r["kind"] for r in raw2] == [r["kind"] for r in raw]


def test_emit_outputs_roundtrip(tmp_path, small_batch):
    grid, table, raw = small_batch
    paths = emit_outputs(table, raw, tmp_path)
    assert paths["table"].exists() and paths["raw"].exists()
    with open(paths["table"], newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 8
    rebuilt = OutcomeTable(regime=grid.regime,
                           conditions=list(grid.delta_d0))
    for row in rows:
        dd0 = float(row["delta_d0"])
        rebuilt.counts[(dd0, row["kind"])] = int(row["count"])
        rebuilt.n_runs[dd0] = int(row["n"])
        assert float(row["prop"]) == pytest.approx(
            table.proportion(dd0, row["kind"]))
        lo, hi = table.interval(dd0, row["kind"])
        assert float(row["wilson_lo"]) == pytest.approx(lo)
        assert float(row["wilson_hi"]) == pytest.approx(hi)
    assert rebuilt.counts == table.counts

    with open(paths["raw"]) as fh:
        raw_rows = [json.loads(line) for line in fh]
    assert len(raw_rows) == len(raw)

    with open(paths["series"], newline="") as fh:
        series = list(csv.reader(fh))
    assert series[0] == ["regime", "delta_d0", "kind", "prop",
                        "wilson_lo", "wilson_hi"]
    assert len(series) == 1 + 8


def test_failed_runs_recorded_not_fatal():
    cfg = fast_cfg()
    cfg.scenario.d_a0 = -5.0   # valid config overall
    grid = ConditionGrid(regime="baseline", delta_d0=(10.0,), reps=2)
    # dd0 = +10 makes d_b0 positive -> per-run validation failure
    table, raw = run_batch(grid, base_seed=1, base_cfg=cfg, jobs=1)
    assert all(r["kind"] == "error" for r in raw)
    assert table.failures[10.0] == 2


def test_grid_validation():
    with pytest.raises(ValueError):
        ConditionGrid(regime="nope", delta_d0=(0.0,), reps=1)
    with pytest.raises(ValueError):
        ConditionGrid(regime="baseline", delta_d0=(0.0,), reps=0)
