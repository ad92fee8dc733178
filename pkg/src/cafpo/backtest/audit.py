"""Date audit of a finished backtest.

The audit trusts nothing recorded by the engine that it can recompute: the
preprocessed characteristics are rebuilt from the raw panel and the lag
schedule, and each window's factor series is rebuilt from returns dated no
later than each row.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..data import preprocess_characteristics
from ..data.panels import parse_month
from ..errors import AuditError, DataError
from ..factors import extract_factor_series
from .engine import BacktestReport, PreparedData

TOLERANCE = 1e-10


@dataclass
class AuditResult:
    passed: bool
    failures: list[str] = field(default_factory=list)
    checked: int = 0

    def raise_on_failure(self) -> None:
        if not self.passed:
            shown = "; ".join(self.failures[:5])
            more = f" (+{len(self.failures) - 5} more)" if len(self.failures) > 5 else ""
            raise AuditError(f"lookahead audit failed: {shown}{more}")


def _m(date: str) -> int:
    return parse_month(date)


def _audit_windows(report: BacktestReport, fail) -> int:
    n = 0
    prev_last = None
    for w in report.windows:
        i = w.window.index
        test_first = _m(w.test_dates[0])
        if _m(w.train_dates[1]) >= test_first:
            fail(f"window {i}: training ends {w.train_dates[1]}, not before test start {w.test_dates[0]}")
        for a, b in zip(w.test_dates, w.test_dates[1:]):
            if _m(b) - _m(a) != 1:
                fail(f"window {i}: test dates {a} and {b} are not consecutive")
        if prev_last is not None and test_first != prev_last + 1:
            fail(f"window {i}: test span starting {w.test_dates[0]} does not continue the previous window")
        prev_last = _m(w.test_dates[-1])
        for what, (first, last) in w.training_inputs.items():
            n += 1
            if _m(last) >= test_first:
                fail(f"window {i}: {what} dated through {last}, inside the test span starting {w.test_dates[0]}")
        for decided, latest, earned in w.decision_inputs:
            n += 1
            if _m(latest) > _m(decided):
                fail(f"window {i}: decision at {decided} used data dated {latest}")
            if _m(earned) != _m(decided) + 1 or earned not in w.test_dates:
                fail(f"window {i}: decision at {decided} earns {earned}, not the next test period")
    return n


def _audit_characteristics(report: BacktestReport, data: PreparedData, fail) -> int:
    used = report.characteristics
    n = 0
    for name in used.names:
        want = data.schedule.lag(name)
        got = used.lags.get(name)
        if got != want:
            fail(f"characteristic {name}: lagged by {got} periods, schedule requires {want}")
    expected = preprocess_characteristics(data.raw_characteristics, data.schedule)
    common = [d for d in used.dates if d in expected.dates]
    if len(common) < len(used.dates):
        extra = [d for d in used.dates if d not in expected.dates]
        fail(f"characteristics dated {extra[0]} have no lagged source; the lag schedule was not applied")
    if not common:
        return n
    ui = [used.dates.index(d) for d in common]
    ei = [expected.dates.index(d) for d in common]
    ea = [expected.assets.index(a) for a in used.assets]
    for p, name in enumerate(used.names):
        q = expected.names.index(name)
        diff = np.abs(used.values[ui][:, :, p] - expected.values[ei][:, ea, q])
        n += 1
        if (diff > TOLERANCE).any():
            t = int(np.argwhere(diff > TOLERANCE)[0][0])
            fail(f"characteristic {name}: value at {common[t]} does not match its lag-{data.schedule.lag(name)} "
                 f"source; lag removed or altered")
    return n


def _expected_features(report: BacktestReport, data: PreparedData, w) -> np.ndarray:
    span = (w.features.dates[0], w.features.dates[-1])
    method = report.config.method
    if method == "CAFPO":
        return extract_factor_series(w.model, data.returns, window=span).values
    if method == "FFPO":
        return data.observable.between(*span).values
    cols = [data.returns.assets.index(a) for a in w.universe]
    t0, t1 = data.returns.date_index(span[0]), data.returns.date_index(span[1])
    return data.returns.filled()[t0 : t1 + 1][:, cols]


def _audit_features(report: BacktestReport, data: PreparedData, fail) -> int:
    n = 0
    for w in report.windows:
        f = w.features
        if f is None:
            continue
        i = w.window.index
        for d, src in zip(f.dates, f.source_dates):
            n += 1
            if _m(src) > _m(d):
                fail(f"window {i}: factor row {d} computed from returns dated {src}")
        try:
            expected = _expected_features(report, data, w)
        except DataError as exc:
            fail(f"window {i}: factor series cannot be reproduced ({exc})")
            continue
        if expected.shape != f.values.shape:
            fail(f"window {i}: factor series has shape {f.values.shape}, expected {expected.shape}")
            continue
        scale = max(1.0, float(np.abs(expected).max()))
        bad = np.abs(f.values - expected) > TOLERANCE * scale
        if bad.any():
            t, k = np.argwhere(bad)[0]
            fail(f"window {i}: factor {f.names[k]} at {f.dates[t]} does not match the value computed from "
                 f"returns through {f.dates[t]}")
        # feature scaling must come from training rows only
        n_train = sum(_m(d) <= _m(w.train_dates[1]) for d in f.dates)
        if w.feature_mean is not None and not np.allclose(w.feature_mean, f.values[:n_train].mean(axis=0),
                                                          rtol=0, atol=1e-12):
            fail(f"window {i}: feature scaling was not fitted on the training span")
    return n


def lookahead_audit(report: BacktestReport, data: PreparedData) -> AuditResult:
    """Check every dated input of every window against its test span and the lag schedule."""
    failures: list[str] = []
    n = _audit_windows(report, failures.append)
    if report.config.method == "CAFPO":
        n += _audit_characteristics(report, data, failures.append)
    n += _audit_features(report, data, failures.append)
    return AuditResult(not failures, failures, n)
