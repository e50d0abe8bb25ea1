import numpy as np
import pytest

import rksysid.benchmark as bm
from rksysid.benchmark import (
    DATASET_FILES,
    OrderingCheck,
    SUITES,
    run_suite,
    write_suite_csv,
)
from rksysid.data import write_canonical_csv


def test_suite_registry_shapes():
    assert set(SUITES) == {"table3-cstr", "table3-winding", "table4-cstr",
                           "table4-winding", "all"}
    assert len(SUITES["table4-cstr"].rows) == 4
    assert len(SUITES["table4-winding"].rows) == 8
    assert len(SUITES["table3-cstr"].rows) == 6
    names = [r.name for r in SUITES["table3-cstr"].rows]
    assert "gru-nonstationary" in names and "gru-extra-delta" in names
    assert len(SUITES["all"].rows) == 6 + 6 + 4 + 8


def test_row_configs_use_tuned_hyperparameters():
    row = next(r for r in SUITES["table3-cstr"].rows if r.name == "gru-standard-full")
    cfg = row.to_config(seed=3, dataset_path="x.csv")
    assert (cfg.batch_size, cfg.k, cfg.lr) == (512, 20, 0.001)
    assert cfg.seed == 3 and cfg.p_missing == 0.0
    row = next(r for r in SUITES["table3-winding"].rows if r.cell == "asrnn")
    cfg = row.to_config(seed=0, dataset_path="x.csv")
    assert (cfg.batch_size, cfg.k, cfg.lr) == (64, 10, 0.01)


def test_ordering_check_kinds():
    means = {"a": 10.0, "b": 4.0}
    assert OrderingCheck("x", "lt", "b", "a").evaluate(means)
    assert not OrderingCheck("x", "lt", "a", "b").evaluate(means)
    assert OrderingCheck("x", "ratio_ge", "a", "b", param=2.0).evaluate(means)
    assert not OrderingCheck("x", "ratio_ge", "a", "b", param=3.0).evaluate(means)
    assert OrderingCheck("x", "le_plus", "a", "b", param=6.0).evaluate(means)


def test_all_suite_contains_cross_table_gate():
    checks = SUITES["all"].orderings
    gate = [c for c in checks if c.kind == "ratio_ge"]
    assert len(gate) == 1
    assert gate[0].left == "table3-cstr/gru-nonstationary"
    assert gate[0].right == "table4-cstr/euler-constant"
    assert gate[0].hard


@pytest.fixture
def stub_environment(tmp_path, monkeypatch):
    """Data files on disk plus a canned trainer, for runner-logic tests."""
    from tests.conftest import driven_series

    for fname in DATASET_FILES.values():
        write_canonical_csv(driven_series(n=60, seed=1), tmp_path / fname)

    canned = {
        "euler-constant": [12.0, 12.5, 11.5, 12.2, 11.8],
        "midpoint-constant": [11.0, 10.5, 11.5, 11.2, 10.8],
        "kutta3-constant": [10.0, 9.5, 10.5, 10.2, 9.8],
        "rk4-constant": [8.0, 8.5, 7.5, 8.2, 7.8],
    }

    def fake_run_task(args):
        row, seed, path, cache = args
        return row.name, seed, canned[row.name][seed], "stub"

    monkeypatch.setattr(bm, "_run_task", fake_run_task)
    return tmp_path


def test_run_suite_aggregates_and_orderings(stub_environment):
    result = run_suite(SUITES["table4-cstr"], str(stub_environment))
    means = {r.spec.name: r.agg.mean for r in result.rows}
    assert means["rk4-constant"] == pytest.approx(8.0)
    assert all(r.agg.failures == 0 for r in result.rows)
    (check, ok, desc) = result.ordering_results[0]
    assert ok and check.hard
    assert not result.hard_failures


def test_run_suite_csv_format(stub_environment, tmp_path):
    result = run_suite(SUITES["table4-cstr"], str(stub_environment))
    out = tmp_path / "rows.csv"
    write_suite_csv(result, out)
    lines = out.read_text().splitlines()
    assert lines[0] == ("config,cell,scheme,formulation,interp,"
                        "mean_rrse,std_rrse,failures,band,pass")
    assert len(lines) == 5
    assert lines[1].startswith("euler-constant,gru,euler,stationary,constant,")
    # append-safe: a second write adds rows without a second header
    write_suite_csv(result, out)
    lines2 = out.read_text().splitlines()
    assert len(lines2) == 9
    assert lines2[5].startswith("euler-constant,")


def test_run_suite_missing_files_enumerated(tmp_path):
    with pytest.raises(FileNotFoundError, match="cstr_p50.csv"):
        run_suite(SUITES["table4-cstr"], str(tmp_path))


def test_run_suite_counts_failures(stub_environment, monkeypatch):
    def sometimes_diverges(args):
        row, seed, path, cache = args
        if seed == 2:
            return row.name, seed, None, "diverged"
        return row.name, seed, 10.0 + seed, "ok"

    monkeypatch.setattr(bm, "_run_task", sometimes_diverges)
    result = run_suite(SUITES["table4-cstr"], str(stub_environment))
    for r in result.rows:
        assert r.agg.failures == 1
        assert r.agg.n == 4


def test_cache_round_trip(tmp_path, monkeypatch):
    from tests.conftest import driven_series

    data = tmp_path / "cstr_p50.csv"
    write_canonical_csv(driven_series(n=60, seed=1), data)
    calls = {"n": 0}

    def fake_run_single(row, seed, path):
        calls["n"] += 1
        return 42.0, "fresh"

    monkeypatch.setattr(bm, "run_single", fake_run_single)
    row = SUITES["table4-cstr"].rows[0]
    cache = str(tmp_path / "cache")
    out1 = bm._run_task((row, 0, str(data), cache))
    out2 = bm._run_task((row, 0, str(data), cache))
    assert calls["n"] == 1
    assert out1[2] == out2[2] == 42.0
