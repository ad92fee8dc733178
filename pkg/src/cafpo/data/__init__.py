"""Panels, CSV ingestion, preprocessing and the synthetic generator."""

from .io import (
    load_caps_csv,
    load_characteristics_csv,
    load_returns_csv,
    read_factor_rows,
    write_caps_csv,
    write_characteristics_csv,
    write_factors_csv,
    write_returns_csv,
)
from .panels import (
    LAG_BY_FREQUENCY,
    CharacteristicsPanel,
    FactorSeries,
    LagSchedule,
    MarketCaps,
    ReturnsPanel,
    format_month,
    month_range,
    parse_month,
)
from .preprocess import (
    apply_lag_schedule,
    impute_cross_sectional_median,
    preprocess_characteristics,
    rank_normalize,
    select_universe,
    top_by_cap,
)
from .synthetic import SyntheticPanel, SyntheticSpec, generate_synthetic_panel, true_factor_r2

__all__ = [
    "LAG_BY_FREQUENCY", "CharacteristicsPanel", "FactorSeries", "LagSchedule", "MarketCaps",
    "ReturnsPanel", "SyntheticPanel", "SyntheticSpec", "apply_lag_schedule", "format_month",
    "generate_synthetic_panel", "impute_cross_sectional_median", "load_caps_csv",
    "load_characteristics_csv", "load_returns_csv", "month_range", "parse_month",
    "preprocess_characteristics", "rank_normalize", "read_factor_rows", "select_universe",
    "top_by_cap", "true_factor_r2", "write_caps_csv", "write_characteristics_csv", "write_factors_csv",
    "write_returns_csv",
]
