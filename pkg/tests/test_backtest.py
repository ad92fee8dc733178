import json
from dataclasses import replace

import numpy as np
import pytest

from cafpo.backtest import (
    REPORT_FILES, RollingWindowSpec, config_hash, emit_report, lookahead_audit, prepare_data, read_metrics,
    run_config_from_dict, run_rolling_backtest,
)
from cafpo.backtest import engine
from cafpo.baselines import equal_weight, markowitz_historical, markowitz_solve
from cafpo.data import FactorSeries, month_range
from cafpo.environment import compound_return, wealth_curve
from cafpo.errors import AuditError, ConfigError, DataError
from oracles import small_run_raw, unlagged_characteristics


def run(method="CAFPO", **over):
    cfg = run_config_from_dict(small_run_raw(method, **over))
    data = prepare_data(cfg)
    return cfg, data, run_rolling_backtest(cfg, data)


@pytest.fixture(scope="module")
def cafpo_run():
    return run("CAFPO")


def test_windows_tile_without_overlap():
    dates = month_range("2000-01", 144)
    ws = RollingWindowSpec(train=120, test=12, step=12).windows(dates)
    assert len(ws) == 2
    for w in ws:
        assert w.train_last < w.test_first and w.test_last - w.test_first == 11
        assert w.decisions == range(w.test_first - 1, w.test_last)
    assert ws[1].test_first == ws[0].test_last + 1


def test_two_windows_on_144_periods_pool_24_periods():
    _, _, rep = run("equal", data={"synthetic": {"n_assets": 5, "n_periods": 144, "seed": 3}},
                    windows={"train": 120, "test": 12, "step": 12, "n_windows": None})
    assert len(rep.returns) == 24 and len(set(rep.dates)) == 24


def test_insufficient_data_reports_required_range():
    with pytest.raises(DataError, match="one window needs 132"):
        RollingWindowSpec(train=120, test=12).windows(month_range("2000-01", 100))
    with pytest.raises(DataError, match="supports only"):
        RollingWindowSpec(train=24, test=12, n_windows=5).windows(month_range("2000-01", 60))


def test_equal_weight_report_matches_direct_application():
    cfg, data, rep = run("equal")
    R = data.returns.filled()
    for w in rep.windows:
        direct = [equal_weight(data.returns.N, mask=data.returns.available[t]).weights @ R[t + 1]
                  for t in w.window.decisions]
        np.testing.assert_array_equal(w.returns, direct)
        assert w.test_dates == data.returns.dates[w.window.test_first : w.window.test_last + 1]


def test_markowitz_historical_report_matches_direct_solve():
    cfg, data, rep = run("markowitz-hist")
    R = data.returns.filled()
    w = rep.windows[1]
    t = w.window.decisions[3]
    wv = markowitz_solve(markowitz_historical(R[t - 23 : t + 1]), mask=data.returns.available[t])
    np.testing.assert_allclose(w.weights[3], wv.weights, rtol=0, atol=1e-15)


def test_pooled_compound_matches_window_chaining(cafpo_run):
    _, _, rep = cafpo_run
    chained = np.prod([wealth_curve(w.returns)[-1] for w in rep.windows]) - 1.0
    assert compound_return(rep.returns) == pytest.approx(chained, rel=1e-12)
    assert rep.metrics()["pooled"]["compound_return"] == pytest.approx(chained, rel=1e-12)


def test_weights_are_valid_long_short(cafpo_run):
    _, _, rep = cafpo_run
    for w in rep.windows:
        for row in w.weights:
            assert row[row > 0].sum() == pytest.approx(1.0, abs=1e-9)
            assert row[row < 0].sum() == pytest.approx(-1.0, abs=1e-9)


def test_report_files_and_row_counts(tmp_path, cafpo_run):
    cfg, _, rep = cafpo_run
    emit_report(rep, tmp_path)
    for name in REPORT_FILES:
        assert (tmp_path / name).is_file()
    n = len(rep.returns)
    lines = {name: (tmp_path / name).read_text().splitlines() for name in REPORT_FILES[1:]}
    assert len(lines["returns.csv"]) == n + 1
    assert len(lines["wealth.csv"]) == n + 1
    assert len(lines["weights.csv"]) == n * len(rep.windows[0].universe) + 1
    assert float(lines["wealth.csv"][-1].split(",")[1]) == pytest.approx(1 + compound_return(rep.returns))
    assert not (tmp_path / "attribution").exists()
    assert (tmp_path / "checkpoints" / "window_01" / "seed_1" / "actor.cafw").is_file()


def test_metrics_round_trip(tmp_path, cafpo_run):
    _, _, rep = cafpo_run
    emit_report(rep, tmp_path, checkpoints=False)
    m = read_metrics(tmp_path)
    assert m == json.loads(json.dumps(rep.metrics()))
    assert m["config_hash"] == rep.config_hash and m["seeds"] == [0, 1]
    assert len(m["training"]) == 4


def test_two_methods_differ_only_in_method_fields_and_metrics(tmp_path):
    a = read_metrics(emit_report(run("equal")[2], tmp_path / "a"))
    b = read_metrics(emit_report(run("value")[2], tmp_path / "b"))
    differing = {k for k in a if a[k] != b[k]}
    assert differing <= {"method", "config_hash", "pooled", "windows", "degenerate_actions"}
    assert set(a) == set(b)


def test_unwritable_output_is_rejected(tmp_path, cafpo_run):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(DataError, match="cannot write"):
        emit_report(cafpo_run[2], blocker / "out")


def test_attribution_emitted_when_enabled(tmp_path):
    _, _, rep = run("CAFPO", attribution={"enabled": True, "n_baselines": 4, "steps": 8})
    emit_report(rep, tmp_path, checkpoints=False)
    files = sorted(p.name for p in (tmp_path / "attribution").rglob("*.csv"))
    assert "portfolio.csv" in files and any(f.startswith("stock_") for f in files)
    assert rep.metrics()["attribution"]["max_completeness_gap"] <= 0.05


def test_determinism_and_thread_independence(tmp_path, monkeypatch):
    outs = []
    for k, threads in enumerate(["1", "1", "2"]):
        monkeypatch.setenv("CAFPO_THREADS", threads)
        outs.append(emit_report(run("CAFPO")[2], tmp_path / str(k)))
    for name in REPORT_FILES:
        ref = (outs[0] / name).read_bytes()
        assert all((o / name).read_bytes() == ref for o in outs[1:]), name


def test_thread_count_validation(monkeypatch):
    monkeypatch.setenv("CAFPO_THREADS", "zero")
    with pytest.raises(ConfigError):
        engine.thread_count()
    monkeypatch.delenv("CAFPO_THREADS")
    assert engine.thread_count() == 1


def test_window_failure_names_the_window():
    with pytest.raises(DataError, match="window 0"):
        run("equal", universe_size=50)


def test_universe_selection_by_cap():
    _, data, rep = run("value", universe_size=5)
    w = rep.windows[0]
    caps = data.caps.caps[w.window.train_last]
    expected = [data.returns.assets[i] for i in np.argsort(-caps)[:5]]
    assert list(w.universe) == expected and rep.windows[0].weights.shape[1] == 5


def test_config_hash_is_deterministic_and_field_sensitive():
    a = run_config_from_dict(small_run_raw())
    b = run_config_from_dict(small_run_raw())
    assert a.hash() == b.hash() == config_hash(a.to_dict())
    assert run_config_from_dict(small_run_raw(eta=0.06)).hash() != a.hash()
    assert run_config_from_dict(small_run_raw(agent={"gamma": 0.98})).hash() != a.hash()


def test_config_errors():
    with pytest.raises(ConfigError, match="unknown keys"):
        run_config_from_dict(small_run_raw(bogus=1))
    with pytest.raises(ConfigError, match="unknown method"):
        run_config_from_dict(small_run_raw("CAPM"))
    with pytest.raises(ConfigError, match="at least one seed"):
        run_config_from_dict(small_run_raw(seeds=[]))
    with pytest.raises(ConfigError, match="grid key"):
        run_config_from_dict(small_run_raw(grid={"colour": [1]}))


def test_grid_search_records_selection():
    _, _, rep = run("FFPO", windows={"validation": 8}, grid={"actor_lr": [1e-3, 1e-2]})
    assert rep.selected["actor_lr"] in (1e-3, 1e-2)
    assert rep.metrics()["selected_hyperparameters"] == rep.selected


@pytest.mark.parametrize("method", ["CAFPO", "FFPO", "vanilla-DRL", "equal", "value", "markowitz-hist",
                                    "markowitz-factor"])
def test_audit_passes_on_correct_runs(method):
    _, data, rep = run(method)
    result = lookahead_audit(rep, data)
    assert result.passed, result.failures
    assert result.checked > 0
    result.raise_on_failure()


def test_audit_fails_when_lag_removed():
    cfg = run_config_from_dict(small_run_raw())
    data = prepare_data(cfg)
    bad = replace(data, characteristics=unlagged_characteristics(data.raw_characteristics, data.schedule))
    rep = run_rolling_backtest(cfg, bad)
    result = lookahead_audit(rep, bad)
    assert not result.passed
    assert any("characteristic c00" in f for f in result.failures)
    with pytest.raises(AuditError):
        result.raise_on_failure()


def test_audit_fails_when_factors_shifted_forward(monkeypatch):
    real = engine.extract_factor_series

    def shifted(model, returns, chars=None, window=None):
        full = real(model, returns)
        i0, i1 = full.date_index(window[0]), full.date_index(window[1])
        # row t carries the factor of t + 1; the last row repeats
        idx = np.minimum(np.arange(i0, i1 + 1) + 1, full.T - 1)
        return FactorSeries(full.dates[i0 : i1 + 1], full.names, full.values[idx])

    monkeypatch.setattr(engine, "extract_factor_series", shifted)
    cfg, data, rep = run("CAFPO")
    result = lookahead_audit(rep, data)
    assert not result.passed
    assert any("factor CA" in f for f in result.failures)


def test_audit_fails_on_training_dates_inside_test_span(cafpo_run):
    _, data, rep = cafpo_run
    w = rep.windows[0]
    w.training_inputs["agent_rewards"], saved = (w.train_dates[0], w.test_dates[0]), w.training_inputs["agent_rewards"]
    try:
        result = lookahead_audit(rep, data)
    finally:
        w.training_inputs["agent_rewards"] = saved
    assert any("window 0: agent_rewards" in f for f in result.failures)
