"""Comparison portfolios: equal and value weight, two Markowitz variants, vanilla DRL states.

Equal and value weight are long-only unless a side assignment is given, in
which case each side is scaled to +1 / -1. The Markowitz portfolios take
the tangency direction ``V^-1 mu`` and map it onto the long-short simplex.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data.panels import ReturnsPanel
from .environment import WeightVector, normalize_action
from .errors import DataError, NumericalError

logger = logging.getLogger(__name__)

RIDGE_THRESHOLD = 1e-8
RIDGE_SCALE = 1e-6
# ridge used when the covariance trace itself is zero (constant returns)
RIDGE_FLOOR = 1e-12


def _sided(scores: np.ndarray, sides, mask) -> WeightVector:
    n = len(scores)
    if n == 0:
        raise DataError("empty universe")
    eligible = np.ones(n, bool) if mask is None else np.asarray(mask, bool)
    if not eligible.any():
        raise DataError("no eligible assets")
    scores = np.where(eligible, scores, 0.0)
    if sides is None:
        return WeightVector(scores / scores.sum(), long_only=True)
    sides = np.asarray(sides, dtype=float)
    if sides.shape != (n,) or not np.isin(sides, (-1.0, 1.0)).all():
        raise DataError("sides must hold +1 or -1 for every asset")
    return normalize_action(scores * sides, eligible)


def equal_weight(universe: Sequence[str] | int, sides=None, mask=None) -> WeightVector:
    n = universe if isinstance(universe, int) else len(universe)
    return _sided(np.ones(n), sides, mask)


def value_weight(caps, sides=None, mask=None) -> WeightVector:
    caps = np.asarray(caps, dtype=float)
    eligible = np.ones(caps.shape, bool) if mask is None else np.asarray(mask, bool)
    if not (np.isfinite(caps[eligible]) & (caps[eligible] > 0)).all():
        raise DataError("value weighting needs positive market caps for every eligible asset")
    return _sided(np.where(eligible, caps, 0.0), sides, mask)


def momentum_sides(previous_returns) -> np.ndarray:
    """Long last period's winners (return >= 0), short its losers."""
    return np.where(np.asarray(previous_returns, dtype=float) >= 0.0, 1.0, -1.0)


@dataclass(frozen=True)
class MarkowitzEstimates:
    mu: np.ndarray
    V: np.ndarray
    ridge: float = 0.0


def condition_covariance(V: np.ndarray) -> tuple[np.ndarray, float]:
    """Add ``delta * I`` when the smallest eigenvalue is below the threshold."""
    V = 0.5 * (V + V.T)
    lam_min = float(np.linalg.eigvalsh(V)[0])
    if lam_min >= RIDGE_THRESHOLD:
        return V, 0.0
    n = V.shape[0]
    tr = float(np.trace(V))
    delta = RIDGE_SCALE * tr / n if tr > 0 else RIDGE_FLOOR
    logger.info("covariance ridge %.3g applied (smallest eigenvalue %.3g)", delta, lam_min)
    return V + delta * np.eye(n), delta


def markowitz_historical(window, ridge: bool = True) -> MarkowitzEstimates:
    """Sample mean and sample covariance (1/(T-1)) of a T x N return window."""
    R = np.asarray(window, dtype=float)
    if R.ndim != 2 or R.shape[0] < 2:
        raise DataError("historical estimates need at least two observations")
    if not np.isfinite(R).all():
        raise DataError("return window has missing values; zero-fill first")
    mu = R.mean(axis=0)
    X = R - mu
    V = X.T @ X / (R.shape[0] - 1)
    if not ridge:
        return MarkowitzEstimates(mu, V)
    V, delta = condition_covariance(V)
    return MarkowitzEstimates(mu, V, delta)


@dataclass(frozen=True)
class FactorRegression:
    alpha: np.ndarray
    D: np.ndarray
    resid_var: np.ndarray


def factor_regression(window, lagged_factors) -> FactorRegression:
    """Per-asset least squares ``r_t = alpha + D f_{t-1} + e``.

    Row ``t`` of ``lagged_factors`` must already hold ``f_{t-1}``.
    """
    R = np.asarray(window, dtype=float)
    F = np.asarray(lagged_factors, dtype=float)
    if F.ndim != 2 or F.shape[0] != R.shape[0]:
        raise DataError(f"factor rows {F.shape} do not align with return rows {R.shape}")
    T, K = F.shape
    X = np.column_stack([np.ones(T), F])
    sv = np.linalg.svd(X, compute_uv=False)
    cond = sv[0] / sv[-1] if sv[-1] > 0 else np.inf
    if T < K + 1 or not np.isfinite(cond) or cond > 1e12:
        raise DataError(f"factor regression is rank deficient ({T} rows, {K + 1} regressors, condition {cond:.3g})")
    coef, *_ = np.linalg.lstsq(X, R, rcond=None)
    resid = R - X @ coef
    dof = max(T - K - 1, 1)
    return FactorRegression(coef[0], coef[1:].T, np.sum(resid * resid, axis=0) / dof)


def markowitz_factor(window, lagged_factors) -> MarkowitzEstimates:
    """``mu = alpha + D mean(f)``, ``V = D cov(f) D' + diag(residual variances)``."""
    F = np.asarray(lagged_factors, dtype=float)
    reg = factor_regression(window, F)
    fbar = F.mean(axis=0)
    cov_f = np.atleast_2d(np.cov(F, rowvar=False, ddof=1))
    mu = reg.alpha + reg.D @ fbar
    V = reg.D @ cov_f @ reg.D.T + np.diag(reg.resid_var)
    return MarkowitzEstimates(mu, 0.5 * (V + V.T))


def markowitz_solve(est: MarkowitzEstimates, risk_free: float = 0.0, mask=None) -> WeightVector:
    """Tangency direction ``V^-1 (mu - rf)`` mapped onto the long-short simplex."""
    try:
        L = np.linalg.cholesky(est.V)
    except np.linalg.LinAlgError:
        raise NumericalError("covariance is not positive definite; enable the ridge") from None
    excess = np.asarray(est.mu, dtype=float) - risk_free
    direction = np.linalg.solve(L.T, np.linalg.solve(L, excess))
    wv = normalize_action(direction, mask)
    if wv.degenerate:
        logger.info("tangency direction is one-sided; degeneracy rule applied")
    return wv


def vanilla_state(returns: ReturnsPanel, date: str, universe: Sequence[str], lookback: int = 12) -> np.ndarray:
    """Trailing ``lookback x N`` returns ending at ``date``, zeros where unavailable."""
    t = returns.date_index(date)
    if t + 1 < lookback:
        raise DataError(f"vanilla state at {date} needs {lookback} periods of history, panel has {t + 1}")
    cols = []
    for a in universe:
        try:
            cols.append(returns.assets.index(a))
        except ValueError:
            raise DataError(f"asset {a} not in returns panel") from None
    return returns.filled()[t - lookback + 1 : t + 1][:, cols]
