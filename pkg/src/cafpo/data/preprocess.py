"""Characteristic preprocessing (lag, impute, rank-normalize) and universe selection.

The order is fixed: :func:`preprocess_characteristics` runs lag, then
cross-sectional median imputation, then rank normalization. After lagging,
the row labelled ``t`` holds the information available for explaining the
return of period ``t``.
"""

from __future__ import annotations

import logging
import warnings

import numpy as np
from scipy.stats import rankdata

from ..errors import DataError
from .panels import CharacteristicsPanel, LagSchedule, MarketCaps, ReturnsPanel, parse_month

logger = logging.getLogger(__name__)


def apply_lag_schedule(raw: CharacteristicsPanel, schedule: LagSchedule) -> CharacteristicsPanel:
    """Shift each characteristic forward by its publication lag and trim the head.

    The output drops the first ``max_lag`` periods, for which some
    characteristic has no lagged value yet.
    """
    lags = {name: schedule.lag(name) for name in raw.names}
    max_lag = max(lags.values(), default=0)
    if raw.T < max_lag + 1:
        raise DataError(f"lag schedule needs at least {max_lag + 1} periods of history, panel has {raw.T}")
    T = raw.T
    out = np.empty((T - max_lag, raw.N, raw.P))
    for p, name in enumerate(raw.names):
        lag = lags[name]
        out[:, :, p] = raw.values[max_lag - lag : T - lag, :, p]
    return raw.with_values(out, dates=raw.dates[max_lag:], lags=lags, normalized=False)


def impute_cross_sectional_median(panel: CharacteristicsPanel) -> CharacteristicsPanel:
    """Fill each missing cell with the median of its (date, characteristic) cross-section.

    A cross-section with nothing observed is filled with zeros.
    """
    vals = np.array(panel.values)
    missing = np.isnan(vals)
    if not missing.any():
        return panel
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        med = np.nanmedian(vals, axis=1)  # (T, P)
    med = np.where(np.isnan(med), 0.0, med)
    filled = np.where(missing, med[:, None, :], vals)
    return panel.with_values(filled)


def rank_normalize(panel: CharacteristicsPanel) -> CharacteristicsPanel:
    """Map each cross-section to ``2 k / (n + 1) - 1`` where ``k`` is the average rank."""
    vals = panel.values
    if np.isnan(vals).any():
        raise DataError("rank_normalize requires imputed data; missing values remain")
    n = panel.N
    ranks = rankdata(vals, method="average", axis=1)
    return panel.with_values(2.0 * ranks / (n + 1) - 1.0, normalized=True)


def preprocess_characteristics(raw: CharacteristicsPanel, schedule: LagSchedule) -> CharacteristicsPanel:
    return rank_normalize(impute_cross_sectional_median(apply_lag_schedule(raw, schedule)))


def top_by_cap(panel: ReturnsPanel, caps: MarketCaps, t: int, n_top: int) -> list[str]:
    """Largest ``n_top`` assets by cap at return-panel period ``t`` among those available then.

    Cap ties break by asset identifier.
    """
    if n_top < 1:
        raise DataError("n_top must be positive")
    date = panel.dates[t]
    ct = caps.date_index(date)
    cap_cols = {a: i for i, a in enumerate(caps.assets)}
    candidates = []
    for i, a in enumerate(panel.assets):
        if not panel.available[t, i] or a not in cap_cols:
            continue
        c = caps.caps[ct, cap_cols[a]]
        if np.isfinite(c) and c > 0:
            candidates.append((-c, a))
    if len(candidates) < n_top:
        raise DataError(f"only {len(candidates)} eligible assets at {date}, need {n_top}")
    candidates.sort()
    return [a for _, a in candidates[:n_top]]


def select_universe(panel: ReturnsPanel, caps: MarketCaps, n_top: int) -> dict[int, list[str]]:
    """Largest ``n_top`` assets per calendar year, measured at the prior year's last period.

    Only assets available (in ``panel``) at the measurement date with a
    finite positive cap qualify. Cap ties break by asset identifier. Years
    whose prior year is not covered by the panel are skipped.
    """
    if n_top < 1:
        raise DataError("n_top must be positive")
    years = sorted({parse_month(d) // 12 for d in panel.dates})
    out: dict[int, list[str]] = {}
    for year in years:
        prior = [t for t, d in enumerate(panel.dates) if parse_month(d) // 12 == year - 1]
        if not prior:
            continue
        try:
            out[year] = top_by_cap(panel, caps, prior[-1], n_top)
        except DataError as exc:
            raise DataError(f"universe for {year}: {exc}") from None
    return out
