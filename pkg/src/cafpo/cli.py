"""Command-line entry point.

Exit codes: 0 success, 2 config error, 3 data error, 4 numerical failure,
5 audit failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .agents import EnsemblePolicy, load_actor
from .attribution import emit_attribution_csv
from .backtest import (
    emit_report, load_run_config, lookahead_audit, prepare_data, read_config_file, read_metrics, run_rolling_backtest,
)
from .backtest.engine import attribute_window, window_universe
from .data import (
    SyntheticSpec, generate_synthetic_panel, write_caps_csv, write_characteristics_csv, write_factors_csv,
    write_returns_csv,
)
from .environment import PortfolioEnv
from .errors import CafpoError, ConfigError, DataError
from .factors import ConditionalAutoencoder, ca_train, extract_factor_series, save_model

logger = logging.getLogger("cafpo")


def _parse_seeds(text: str) -> list[int]:
    try:
        seeds = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise ConfigError(f"--seed-override expects comma-separated integers, got {text!r}") from None
    if not seeds:
        raise ConfigError("--seed-override is empty")
    return seeds


def _load(args):
    if not args.config:
        raise ConfigError(f"{args.command} needs --config")
    cfg = load_run_config(args.config)
    if args.seed_override:
        cfg.seeds = _parse_seeds(args.seed_override)
    if args.windows is not None:
        if args.windows < 1:
            raise ConfigError("--windows must be positive")
        cfg.windows = replace(cfg.windows, n_windows=args.windows)
    cfg.validate()
    return cfg


def _out(args, default: str) -> Path:
    return Path(args.out or default)


def cmd_generate_data(args) -> int:
    if not args.config:
        raise ConfigError("generate-data needs --config")
    raw = read_config_file(args.config)
    syn = raw.get("data", {}).get("synthetic") if "data" in raw else raw.get("synthetic", raw)
    if not isinstance(syn, dict):
        raise ConfigError(f"{args.config}: no synthetic data spec found")
    try:
        spec = SyntheticSpec(**syn)
    except TypeError as exc:
        raise ConfigError(f"{args.config}: synthetic spec: {exc}") from None
    if args.seed_override:
        spec.seed = _parse_seeds(args.seed_override)[0]
    panel = generate_synthetic_panel(spec)
    out = _out(args, "data")
    out.mkdir(parents=True, exist_ok=True)
    write_returns_csv(panel.returns, out / "returns.csv")
    write_characteristics_csv(panel.characteristics, out / "characteristics.csv")
    write_caps_csv(panel.caps, out / "caps.csv")
    write_factors_csv(panel.factors, out / "true_factors.csv")
    write_factors_csv(panel.observable, out / "observable_factors.csv")
    (out / "frequencies.json").write_text(json.dumps(panel.schedule.frequencies, indent=2, sort_keys=True) + "\n")
    logger.info("wrote %d periods x %d assets to %s", panel.returns.T, panel.returns.N, out)
    return 0


def cmd_train_factors(args) -> int:
    cfg = _load(args)
    data = prepare_data(cfg)
    out = _out(args, "factors")
    earliest = data.returns.dates.index(data.characteristics.dates[0])
    fc = cfg.factors
    for w in cfg.windows.windows(data.returns.dates, earliest):
        dates = data.returns.dates
        train = (dates[w.train_first], dates[w.train_last])
        universe = window_universe(cfg, data, w.train_last)
        model = ConditionalAutoencoder(data.characteristics.P, universe, fc.n_factors, fc.hidden_sizes, fc.seed)
        _, log = ca_train(model, data.returns, data.characteristics, train, fc.epochs, fc.seed, fc.lr, fc.batch_size)
        wdir = out / f"window_{w.index:02d}"
        save_model(model, wdir)
        write_factors_csv(extract_factor_series(model, data.returns, window=(train[0], dates[w.test_last])),
                          wdir / "factors.csv")
        logger.info("window %d: trained on %s..%s, final loss %.4g", w.index, *train, log.losses[-1])
    return 0


def cmd_backtest(args) -> int:
    cfg = _load(args)
    data = prepare_data(cfg)
    report = run_rolling_backtest(cfg, data)
    out = emit_report(report, _out(args, "run"))
    audit = lookahead_audit(report, data)
    (out / "audit.json").write_text(json.dumps({"passed": audit.passed, "checked": audit.checked,
                                                "failures": audit.failures}, indent=2, sort_keys=True) + "\n")
    pooled = report.metrics()["pooled"]
    print(f"{cfg.method}: {len(report.returns)} test periods, compound return {pooled['compound_return']:.4f}, "
          f"Sharpe {_fmt(pooled['sharpe'])}, Sterling {_fmt(pooled['sterling'])}")
    audit.raise_on_failure()
    return 0


def cmd_attribute(args) -> int:
    cfg = _load(args)
    run = _out(args, "run")
    ckpt = run / "checkpoints"
    wdirs = sorted(ckpt.glob("window_*"))
    if not wdirs:
        raise DataError(f"{ckpt}: no agent checkpoints; run backtest with a learning method first")
    data = prepare_data(cfg)
    acfg = replace(cfg.attribution, enabled=True)
    acfg.validate()
    for wdir in wdirs:
        meta = json.loads((wdir / "window.json").read_text())
        with open(wdir / "features.csv", newline="") as fh:
            rows = list(csv.reader(fh))[1:]
        dates = [r[0] for r in rows]
        X = np.array([[float(v) for v in r[1:]] for r in rows])
        cols = [data.returns.assets.index(a) for a in meta["universe"]]
        t0, t1 = data.returns.date_index(dates[0]), data.returns.date_index(dates[-1])
        R = data.returns.filled()[t0 : t1 + 1][:, cols]
        avail = data.returns.available[t0 : t1 + 1][:, cols]
        actors = [load_actor(d) for d in sorted(wdir.glob("seed_*"))]
        M = meta["lookback"]
        env = PortfolioEnv(X, R, avail, dates, lookback=M)
        n_train = dates.index(meta["train"][1]) + 1
        test_stop = dates.index(meta["test"][1])
        res = attribute_window(acfg, EnsemblePolicy(actors), env, range(M - 1, n_train - 1),
                               range(n_train - 1, test_stop), meta["universe"], meta["factor_names"])
        target = run / "attribution" / wdir.name
        emit_attribution_csv(res["dates"], res["factor_names"], res["stock"], res["portfolio"], target,
                             res["stock_dates"])
        print(f"{wdir.name}: {len(res['dates'])} test states attributed, "
              f"max completeness gap {res['max_completeness_gap']:.2e}")
    return 0


def _fmt(x) -> str:
    return "n/a" if x is None else f"{x:.4f}"


def cmd_report(args) -> int:
    runs = [Path(p) for p in args.runs] or [_out(args, "run")]
    rows = []
    for run in runs:
        m = read_metrics(run)
        p = m["pooled"]
        rows.append([str(run), m["method"], m.get("algorithm") or "", m.get("reward") or "", p["n_periods"],
                     p["compound_return"], p["sharpe"], p["sterling"], p["max_drawdown"]])
    header = ["run", "method", "algorithm", "reward", "periods", "compound_return", "sharpe", "sterling",
              "max_drawdown"]
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([v if isinstance(v, (str, int)) or v is None else f"{v:.6g}" for v in r])
    return 0


COMMANDS = {
    "generate-data": (cmd_generate_data, "write a synthetic panel as CSV files"),
    "train-factors": (cmd_train_factors, "fit the conditional autoencoder on each window's training span"),
    "backtest": (cmd_backtest, "run the rolling-window backtest and write the report"),
    "attribute": (cmd_attribute, "attribute a finished run's ensemble decisions to factors"),
    "report": (cmd_report, "tabulate pooled metrics of one or more runs"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML or JSON run configuration")
    common.add_argument("--out", help="output directory (input run directory for attribute/report)")
    common.add_argument("--seed-override", help="comma-separated seeds replacing the configured ones")
    common.add_argument("--windows", type=int, help="evaluate only the first N windows")
    common.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    parser = argparse.ArgumentParser(prog="cafpo", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"cafpo {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, parents=[common], help=help_text)
        if name == "report":
            p.add_argument("runs", nargs="*", help="run directories (default: --out)")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command][0](args)
    except CafpoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
