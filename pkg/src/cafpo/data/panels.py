"""Dated panel containers.

Dates are monthly periods written ``YYYY-MM``. Every panel holds a
contiguous run of months; arrays are frozen after construction so panels can
be shared freely.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from ..errors import ConfigError, DataError

_MONTH_RE = re.compile(r"^(\d{4})-(\d{2})$")

LAG_BY_FREQUENCY = {"monthly": 1, "quarterly": 4, "annual": 6}


def parse_month(text: str) -> int:
    """``"2020-03"`` -> absolute month index."""
    m = _MONTH_RE.match(str(text).strip())
    if not m or not 1 <= int(m.group(2)) <= 12:
        raise DataError(f"cannot parse date {text!r}; expected YYYY-MM")
    return int(m.group(1)) * 12 + int(m.group(2)) - 1


def format_month(index: int) -> str:
    return f"{index // 12:04d}-{index % 12 + 1:02d}"


def month_range(start: str, n: int) -> tuple[str, ...]:
    s = parse_month(start)
    return tuple(format_month(s + k) for k in range(n))


def _check_dates(dates: Sequence[str]) -> tuple[str, ...]:
    dates = tuple(dates)
    idx = [parse_month(d) for d in dates]
    for a, b in zip(idx, idx[1:]):
        if b - a != 1:
            raise DataError(f"dates must be consecutive months; {format_month(a)} is followed by {format_month(b)}")
    return tuple(format_month(i) for i in idx)


def _frozen(arr, dtype=np.float64) -> np.ndarray:
    out = np.array(arr, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class ReturnsPanel:
    """T x N simple returns with an availability mask.

    Unavailable cells hold NaN; use :meth:`filled` for the zero-filled view.
    """

    dates: tuple[str, ...]
    assets: tuple[str, ...]
    returns: np.ndarray
    available: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "dates", _check_dates(self.dates))
        object.__setattr__(self, "assets", tuple(str(a) for a in self.assets))
        avail = _frozen(self.available, bool)
        ret = np.array(self.returns, dtype=np.float64)
        shape = (len(self.dates), len(self.assets))
        if ret.shape != shape or avail.shape != shape:
            raise DataError(f"returns {ret.shape} / mask {avail.shape} do not match {shape} dates x assets")
        if len(set(self.assets)) != len(self.assets):
            raise DataError("duplicate asset identifiers")
        vals = ret[avail]
        if not np.isfinite(vals).all():
            raise DataError("available returns must be finite")
        if (vals <= -1.0).any():
            t, i = np.argwhere(avail & (ret <= -1.0))[0]
            raise DataError(f"return {ret[t, i]} <= -1 at {self.dates[t]}, asset {self.assets[i]}")
        ret[~avail] = np.nan
        object.__setattr__(self, "returns", _frozen(ret))
        object.__setattr__(self, "available", avail)

    @property
    def T(self) -> int:
        return len(self.dates)

    @property
    def N(self) -> int:
        return len(self.assets)

    def filled(self) -> np.ndarray:
        return np.where(self.available, self.returns, 0.0)

    def date_index(self, date: str) -> int:
        try:
            return self.dates.index(format_month(parse_month(date)))
        except ValueError:
            raise DataError(f"date {date} not in panel ({self.dates[0]}..{self.dates[-1]})") from None

    def slice(self, start: int, stop: int) -> "ReturnsPanel":
        return ReturnsPanel(self.dates[start:stop], self.assets, self.returns[start:stop], self.available[start:stop])

    def select_assets(self, assets: Sequence[str]) -> "ReturnsPanel":
        cols = [self.assets.index(a) for a in assets]
        return ReturnsPanel(self.dates, tuple(assets), self.returns[:, cols], self.available[:, cols])


@dataclass(frozen=True)
class CharacteristicsPanel:
    """T x N x P firm characteristics; NaN marks a missing value.

    ``lags`` records the lag (in periods) applied to each characteristic, or
    is empty for raw data. ``normalized`` is set once values are rank-mapped.
    """

    dates: tuple[str, ...]
    assets: tuple[str, ...]
    names: tuple[str, ...]
    values: np.ndarray
    lags: Mapping[str, int] = field(default_factory=dict)
    normalized: bool = False

    def __post_init__(self):
        object.__setattr__(self, "dates", _check_dates(self.dates))
        object.__setattr__(self, "assets", tuple(str(a) for a in self.assets))
        object.__setattr__(self, "names", tuple(str(n) for n in self.names))
        vals = _frozen(self.values)
        shape = (len(self.dates), len(self.assets), len(self.names))
        if vals.shape != shape:
            raise DataError(f"characteristics {vals.shape} do not match {shape} dates x assets x names")
        if np.isinf(vals).any():
            raise DataError("characteristic values must be finite or missing")
        if self.normalized:
            if np.isnan(vals).any():
                raise DataError("normalized characteristics may not contain missing values")
            if (np.abs(vals) >= 1.0).any():
                raise DataError("normalized characteristics must lie strictly inside (-1, 1)")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "lags", dict(self.lags))

    @property
    def T(self) -> int:
        return len(self.dates)

    @property
    def N(self) -> int:
        return len(self.assets)

    @property
    def P(self) -> int:
        return len(self.names)

    def date_index(self, date: str) -> int:
        try:
            return self.dates.index(format_month(parse_month(date)))
        except ValueError:
            raise DataError(f"date {date} not in characteristics panel") from None

    def select_assets(self, assets: Sequence[str]) -> "CharacteristicsPanel":
        cols = [self.assets.index(a) for a in assets]
        return CharacteristicsPanel(self.dates, tuple(assets), self.names, self.values[:, cols, :],
                                    self.lags, self.normalized)

    def with_values(self, values: np.ndarray, **changes) -> "CharacteristicsPanel":
        kw = dict(dates=self.dates, assets=self.assets, names=self.names, values=values,
                  lags=self.lags, normalized=self.normalized)
        kw.update(changes)
        return CharacteristicsPanel(**kw)


@dataclass(frozen=True)
class LagSchedule:
    """Publication frequency per characteristic."""

    frequencies: Mapping[str, str]

    def __post_init__(self):
        freq = dict(self.frequencies)
        for name, tag in freq.items():
            if tag not in LAG_BY_FREQUENCY:
                raise ConfigError(f"characteristic {name}: unknown frequency {tag!r}; "
                                  f"expected one of {sorted(LAG_BY_FREQUENCY)}")
        object.__setattr__(self, "frequencies", freq)

    @classmethod
    def uniform(cls, names: Sequence[str], frequency: str = "monthly") -> "LagSchedule":
        return cls({n: frequency for n in names})

    def lag(self, name: str) -> int:
        try:
            return LAG_BY_FREQUENCY[self.frequencies[name]]
        except KeyError:
            raise ConfigError(f"characteristic {name!r} has no frequency in the lag schedule") from None

    @property
    def max_lag(self) -> int:
        return max((LAG_BY_FREQUENCY[f] for f in self.frequencies.values()), default=0)


@dataclass(frozen=True)
class MarketCaps:
    dates: tuple[str, ...]
    assets: tuple[str, ...]
    caps: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "dates", _check_dates(self.dates))
        object.__setattr__(self, "assets", tuple(str(a) for a in self.assets))
        caps = _frozen(self.caps)
        if caps.shape != (len(self.dates), len(self.assets)):
            raise DataError("market caps do not match dates x assets")
        object.__setattr__(self, "caps", caps)

    def date_index(self, date: str) -> int:
        try:
            return self.dates.index(format_month(parse_month(date)))
        except ValueError:
            raise DataError(f"date {date} not in market-cap panel") from None


@dataclass(frozen=True)
class FactorSeries:
    """T x K factor realizations with no missing entries.

    ``source_dates[t]`` is the latest return date that row ``t`` was computed
    from. For a correctly built series it equals ``dates[t]``; the lookahead
    audit checks that relationship.
    """

    dates: tuple[str, ...]
    names: tuple[str, ...]
    values: np.ndarray
    source_dates: tuple[str, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "dates", _check_dates(self.dates))
        object.__setattr__(self, "names", tuple(str(n) for n in self.names))
        vals = _frozen(self.values)
        if vals.shape != (len(self.dates), len(self.names)):
            raise DataError(f"factor values {vals.shape} do not match {len(self.dates)} dates x {len(self.names)} factors")
        if not np.isfinite(vals).all():
            raise DataError("factor series may not contain missing or non-finite values")
        src = self.dates if self.source_dates is None else tuple(format_month(parse_month(d)) for d in self.source_dates)
        if len(src) != len(self.dates):
            raise DataError("source_dates must align with dates")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "source_dates", src)

    @property
    def T(self) -> int:
        return len(self.dates)

    @property
    def K(self) -> int:
        return len(self.names)

    def date_index(self, date: str) -> int:
        try:
            return self.dates.index(format_month(parse_month(date)))
        except ValueError:
            raise DataError(f"date {date} not covered by factor series ({self.dates[0]}..{self.dates[-1]})") from None

    def slice(self, start: int, stop: int) -> "FactorSeries":
        return FactorSeries(self.dates[start:stop], self.names, self.values[start:stop], self.source_dates[start:stop])

    def between(self, first: str, last: str) -> "FactorSeries":
        return self.slice(self.date_index(first), self.date_index(last) + 1)
