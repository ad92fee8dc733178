"""CSV ingestion and export for the long-format panel files.

All files are long format with a header row. Row numbers in error messages
count the header as row 1, matching what a spreadsheet shows.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterator

import numpy as np

from ..errors import DataError
from .panels import (
    CharacteristicsPanel,
    FactorSeries,
    MarketCaps,
    ReturnsPanel,
    format_month,
    parse_month,
)


def _rows(path: str | Path, columns: tuple[str, ...]) -> Iterator[tuple[int, dict[str, str]]]:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"{path}: file not found")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = tuple(h.strip() for h in (reader.fieldnames or ()))
        if header[: len(columns)] != columns:
            raise DataError(f"{path}: expected header {','.join(columns)}, got {','.join(header)}")
        for lineno, row in enumerate(reader, start=2):
            yield lineno, {k.strip(): (v or "").strip() for k, v in row.items() if k is not None}


def _float(text: str, path, lineno: int, column: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise DataError(f"{path}: row {lineno}: {column} {text!r} is not a number") from None


def _month(text: str, path, lineno: int) -> int:
    try:
        return parse_month(text)
    except DataError:
        raise DataError(f"{path}: row {lineno}: cannot parse date {text!r}; expected YYYY-MM") from None


def _span(months: set[int]) -> tuple[int, tuple[str, ...]]:
    lo, hi = min(months), max(months)
    return lo, tuple(format_month(m) for m in range(lo, hi + 1))


def load_returns_csv(path: str | Path) -> ReturnsPanel:
    """Read ``date,asset,return``; absent (date, asset) pairs become unavailable."""
    first_row: dict[tuple[int, str], int] = {}
    values: dict[tuple[int, str], float] = {}
    for lineno, row in _rows(path, ("date", "asset", "return")):
        m = _month(row["date"], path, lineno)
        key = (m, row["asset"])
        if key in first_row:
            raise DataError(f"{path}: row {lineno}: duplicate ({row['date']}, {row['asset']}), "
                            f"first seen at row {first_row[key]}")
        r = _float(row["return"], path, lineno, "return")
        if not np.isfinite(r) or r <= -1.0:
            raise DataError(f"{path}: row {lineno}: return {r} must be finite and > -1")
        first_row[key] = lineno
        values[key] = r
    if not values:
        raise DataError(f"{path}: no data rows")
    lo, dates = _span({m for m, _ in values})
    assets = tuple(sorted({a for _, a in values}))
    col = {a: i for i, a in enumerate(assets)}
    ret = np.full((len(dates), len(assets)), np.nan)
    for (m, a), r in values.items():
        ret[m - lo, col[a]] = r
    return ReturnsPanel(dates, assets, ret, ~np.isnan(ret))


def load_characteristics_csv(path: str | Path) -> CharacteristicsPanel:
    """Read ``date,asset,name,value``; an empty value is a missing marker."""
    cells: dict[tuple[int, str, str], float] = {}
    for lineno, row in _rows(path, ("date", "asset", "name", "value")):
        m = _month(row["date"], path, lineno)
        key = (m, row["asset"], row["name"])
        if key in cells:
            raise DataError(f"{path}: row {lineno}: duplicate ({row['date']}, {row['asset']}, {row['name']})")
        cells[key] = np.nan if row["value"] == "" else _float(row["value"], path, lineno, "value")
    if not cells:
        raise DataError(f"{path}: no data rows")
    lo, dates = _span({k[0] for k in cells})
    assets = tuple(sorted({k[1] for k in cells}))
    names = tuple(sorted({k[2] for k in cells}))
    ai = {a: i for i, a in enumerate(assets)}
    ni = {n: i for i, n in enumerate(names)}
    vals = np.full((len(dates), len(assets), len(names)), np.nan)
    for (m, a, n), v in cells.items():
        vals[m - lo, ai[a], ni[n]] = v
    return CharacteristicsPanel(dates, assets, names, vals)


def load_caps_csv(path: str | Path) -> MarketCaps:
    cells: dict[tuple[int, str], float] = {}
    for lineno, row in _rows(path, ("date", "asset", "market_cap")):
        m = _month(row["date"], path, lineno)
        key = (m, row["asset"])
        if key in cells:
            raise DataError(f"{path}: row {lineno}: duplicate ({row['date']}, {row['asset']})")
        cells[key] = _float(row["market_cap"], path, lineno, "market_cap")
    if not cells:
        raise DataError(f"{path}: no data rows")
    lo, dates = _span({k[0] for k in cells})
    assets = tuple(sorted({k[1] for k in cells}))
    ai = {a: i for i, a in enumerate(assets)}
    caps = np.full((len(dates), len(assets)), np.nan)
    for (m, a), v in cells.items():
        caps[m - lo, ai[a]] = v
    return MarketCaps(dates, assets, caps)


def read_factor_rows(path: str | Path) -> FactorSeries:
    """Read ``date,factor,value`` into a gap-free series with factors in first-seen order."""
    cells: dict[tuple[int, str], float] = {}
    order: list[str] = []
    for lineno, row in _rows(path, ("date", "factor", "value")):
        m = _month(row["date"], path, lineno)
        key = (m, row["factor"])
        if key in cells:
            raise DataError(f"{path}: row {lineno}: duplicate ({row['date']}, {row['factor']})")
        if row["factor"] not in order:
            order.append(row["factor"])
        cells[key] = _float(row["value"], path, lineno, "value")
    if not cells:
        raise DataError(f"{path}: no data rows")
    months = sorted({k[0] for k in cells})
    for a, b in zip(months, months[1:]):
        if b - a != 1:
            gap = ", ".join(format_month(x) for x in range(a + 1, b))
            raise DataError(f"{path}: factor series has a gap: {gap} missing")
    vals = np.full((len(months), len(order)), np.nan)
    for (m, f), v in cells.items():
        vals[m - months[0], order.index(f)] = v
    missing = np.argwhere(np.isnan(vals))
    if len(missing):
        t, k = missing[0]
        raise DataError(f"{path}: factor {order[k]} missing at {format_month(months[t])}")
    return FactorSeries(tuple(format_month(m) for m in months), tuple(order), vals)


# --- writers ----------------------------------------------------------------


def _fmt(x: float) -> str:
    return repr(float(x))


def write_returns_csv(panel: ReturnsPanel, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "asset", "return"])
        for t, d in enumerate(panel.dates):
            for i, a in enumerate(panel.assets):
                if panel.available[t, i]:
                    w.writerow([d, a, _fmt(panel.returns[t, i])])


def write_characteristics_csv(panel: CharacteristicsPanel, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "asset", "name", "value"])
        for t, d in enumerate(panel.dates):
            for i, a in enumerate(panel.assets):
                for p, n in enumerate(panel.names):
                    v = panel.values[t, i, p]
                    w.writerow([d, a, n, "" if np.isnan(v) else _fmt(v)])


def write_caps_csv(caps: MarketCaps, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "asset", "market_cap"])
        for t, d in enumerate(caps.dates):
            for i, a in enumerate(caps.assets):
                if np.isfinite(caps.caps[t, i]):
                    w.writerow([d, a, _fmt(caps.caps[t, i])])


def write_factors_csv(series: FactorSeries, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "factor", "value"])
        for t, d in enumerate(series.dates):
            for k, n in enumerate(series.names):
                w.writerow([d, n, _fmt(series.values[t, k])])
