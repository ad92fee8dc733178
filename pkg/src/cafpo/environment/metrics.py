"""Evaluation metrics on a series of per-period portfolio returns.

Undefined ratios (zero dispersion, zero drawdown) come back as ``None``.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np


def wealth_curve(returns: Sequence[float], initial: float = 1.0) -> np.ndarray:
    """Wealth after each period, starting from ``initial`` (not included)."""
    return initial * np.cumprod(1.0 + np.asarray(returns, dtype=float))


def compound_return(returns: Sequence[float]) -> float:
    r = np.asarray(returns, dtype=float)
    return float(np.prod(1.0 + r) - 1.0) if r.size else 0.0


def sharpe_ratio(returns: Sequence[float], annualize: bool = False) -> float | None:
    r = np.asarray(returns, dtype=float)
    if r.size < 2 or np.ptp(r) == 0.0:
        return None
    s = float(np.mean(r) / np.std(r, ddof=1))
    return s * math.sqrt(12.0) if annualize else s


def drawdown_from_wealth(wealth: Sequence[float]) -> float:
    w = np.asarray(wealth, dtype=float)
    if w.size == 0:
        return 0.0
    peak = np.maximum.accumulate(w)
    return float(np.max((peak - w) / peak))


def max_drawdown(returns: Sequence[float]) -> float:
    """Largest fractional fall of the wealth curve from a prior peak (initial wealth counts)."""
    return drawdown_from_wealth(np.concatenate([[1.0], wealth_curve(returns)]))


def sterling_ratio(returns: Sequence[float]) -> float | None:
    r = np.asarray(returns, dtype=float)
    mdd = max_drawdown(r)
    if r.size == 0 or mdd == 0.0:
        return None
    return float(np.mean(r) / mdd)


def summarize(returns: Sequence[float]) -> dict[str, float | int | None]:
    r = np.asarray(returns, dtype=float)
    return {
        "n_periods": int(r.size),
        "compound_return": compound_return(r),
        "mean_return": float(np.mean(r)) if r.size else None,
        "sharpe": sharpe_ratio(r),
        "sterling": sterling_ratio(r),
        "max_drawdown": max_drawdown(r),
    }
