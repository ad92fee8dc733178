"""Rolling-window backtests, the lookahead audit and report emission."""

from .audit import AuditResult, lookahead_audit
from .config import (
    LEARNING_METHODS, METHODS, DataConfig, RollingWindowSpec, RunConfig, Window, config_hash, load_run_config,
    read_config_file, run_config_from_dict,
)
from .engine import (
    BacktestReport, PreparedData, SeedResult, WindowResult, attribute_window, prepare_data, run_rolling_backtest,
    run_window, thread_count,
)
from .report import REPORT_FILES, emit_report, metrics_json, read_metrics

__all__ = [
    "AuditResult", "BacktestReport", "DataConfig", "LEARNING_METHODS", "METHODS", "PreparedData", "REPORT_FILES",
    "RollingWindowSpec", "RunConfig", "SeedResult", "Window", "WindowResult", "attribute_window", "config_hash",
    "emit_report", "load_run_config", "lookahead_audit", "metrics_json", "prepare_data", "read_config_file",
    "read_metrics", "run_config_from_dict", "run_rolling_backtest", "run_window", "thread_count",
]
