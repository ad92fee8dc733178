"""Report files: metrics, return, weight and wealth CSVs, attributions, checkpoints."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from ..agents import save_agent
from ..attribution import emit_attribution_csv
from ..environment import wealth_curve
from ..errors import DataError
from .engine import BacktestReport

REPORT_FILES = ("metrics.json", "returns.csv", "weights.csv", "wealth.csv")


def _writer(path: Path):
    fh = open(path, "w", newline="")
    return fh, csv.writer(fh, lineterminator="\n")


def metrics_json(report: BacktestReport) -> str:
    return json.dumps(report.metrics(), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _write_attribution(report: BacktestReport, out: Path) -> None:
    parts = [w.attribution for w in report.windows if w.attribution]
    if not parts:
        return
    names = parts[0]["factor_names"]
    if any(p["factor_names"] != names for p in parts):
        # factor identities change between windows (latent factors are refit), so keep windows apart
        for w in report.windows:
            a = w.attribution
            emit_attribution_csv(a["dates"], a["factor_names"], a["stock"], a["portfolio"],
                                 out / "attribution" / f"window_{w.window.index:02d}", a["stock_dates"])
        return
    dates = [d for p in parts for d in p["dates"]]
    portfolio = np.concatenate([p["portfolio"] for p in parts])
    stock: dict[str, list] = {}
    stock_dates: dict[str, list] = {}
    for p in parts:
        for a, rows in p["stock"].items():
            stock.setdefault(a, []).extend(rows)
            stock_dates.setdefault(a, []).extend(p["stock_dates"][a])
    emit_attribution_csv(dates, names, {a: np.array(v) for a, v in stock.items()}, portfolio,
                         out / "attribution", stock_dates)


def _write_checkpoints(report: BacktestReport, out: Path) -> None:
    for w in report.windows:
        if not w.seeds:
            continue
        wdir = out / "checkpoints" / f"window_{w.window.index:02d}"
        for s in w.seeds:
            save_agent(s.agent, wdir / f"seed_{s.seed}", report.config_hash, w.train_dates)
        with open(wdir / "features.csv", "w", newline="") as fh:
            cw = csv.writer(fh, lineterminator="\n")
            cw.writerow(["date", *w.features.names])
            for d, row in zip(w.features.dates, w.scaled):
                cw.writerow([d, *(repr(float(v)) for v in row)])
        meta = {"index": w.window.index, "train": list(w.train_dates), "test": [w.test_dates[0], w.test_dates[-1]],
                "universe": list(w.universe), "lookback": w.seeds[0].agent.config.lookback,
                "factor_names": list(w.features.names),
                "feature_mean": w.feature_mean.tolist(), "feature_std": w.feature_std.tolist()}
        (wdir / "window.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def emit_report(report: BacktestReport, out_dir: str | Path, checkpoints: bool = True) -> Path:
    """Write the report files under ``out_dir`` and return it.

    ``weights.csv`` rows are dated by the holding period whose return the
    weights earned, matching ``returns.csv``.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise DataError(f"cannot write report to {out}: {exc}") from None

    (out / "metrics.json").write_text(metrics_json(report))
    fh, w = _writer(out / "returns.csv")
    with fh:
        w.writerow(["date", "window", "return"])
        for win in report.windows:
            for d, r in zip(win.test_dates, win.returns):
                w.writerow([d, win.window.index, repr(float(r))])
    fh, w = _writer(out / "weights.csv")
    with fh:
        w.writerow(["date", "asset", "weight"])
        for win in report.windows:
            for d, row in zip(win.test_dates, win.weights):
                for a, x in zip(win.universe, row):
                    w.writerow([d, a, repr(float(x))])
    fh, w = _writer(out / "wealth.csv")
    with fh:
        w.writerow(["date", "wealth"])
        for d, x in zip(report.dates, wealth_curve(report.returns)):
            w.writerow([d, repr(float(x))])
    if report.config.attribution.enabled:
        _write_attribution(report, out)
    if checkpoints:
        _write_checkpoints(report, out)
    return out


def read_metrics(out_dir: str | Path) -> dict:
    path = Path(out_dir) / "metrics.json"
    try:
        return json.loads(path.read_text())
    except FileNotFoundError:
        raise DataError(f"{path}: no metrics file; run a backtest first") from None
