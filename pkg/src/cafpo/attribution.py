"""Expected-gradients attribution of actor outputs to state-window entries.

For a state ``x``, baselines ``b_1..b_B`` and a differentiable map ``f``,
the attribution of output ``i`` to entry ``(j, k)`` is

    (1/B) sum_b (x - b)_jk * integral_0^1 d f_i(b + a (x - b)) / d x_jk  da

The path integral uses Gauss-Legendre quadrature, which is exact for maps
that are polynomial of low degree along the path (in particular linear
ones). Summing over ``(j, k)`` recovers ``f_i(x) - mean_b f_i(b)``.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .diffcore import Tape, Tensor
from .errors import ConfigError, NumericalError, ShapeError

logger = logging.getLogger(__name__)


@dataclass
class AttributionConfig:
    enabled: bool = False
    n_baselines: int = 32
    steps: int = 16
    seed: int = 0

    def validate(self) -> None:
        if self.n_baselines < 1:
            raise ConfigError("attribution needs at least one baseline")
        if self.steps < 2:
            raise ConfigError("attribution needs at least two integration steps")


@dataclass(frozen=True)
class Attribution:
    """Attributions for one state: ``values`` is (N, M, K)."""

    values: np.ndarray
    output: np.ndarray
    baseline_mean: np.ndarray

    @property
    def expected_total(self) -> np.ndarray:
        return self.output - self.baseline_mean

    def completeness_gap(self) -> np.ndarray:
        """Per-output |sum of attributions - (f(x) - mean f(b))| relative to the latter."""
        total = self.values.sum(axis=(1, 2))
        target = self.expected_total
        with np.errstate(divide="ignore", invalid="ignore"):
            gap = np.abs(total - target) / np.abs(target)
        return np.where(total == target, 0.0, gap)


def sample_baselines(states: np.ndarray, n: int, seed: int) -> np.ndarray:
    """Uniform draws (with replacement) from a stack of training states."""
    states = np.asarray(states, dtype=float)
    idx = np.random.default_rng(seed).integers(0, len(states), size=n)
    return states[idx]


def attribute_state(model: Callable[[Tensor], Tensor], state, baselines, steps: int = 16) -> Attribution:
    """Attribute every output of ``model`` at ``state`` (an ``M x K`` window)."""
    x = np.asarray(state, dtype=float)
    base = np.asarray(baselines, dtype=float)
    if base.ndim == x.ndim:
        base = base[None]
    if base.shape[1:] != x.shape:
        raise ShapeError(f"baselines {base.shape[1:]} do not match state {x.shape}")
    if steps < 2:
        raise ConfigError("attribution needs at least two integration steps")
    nodes, wts = np.polynomial.legendre.leggauss(steps)
    alpha, w = 0.5 * (nodes + 1.0), 0.5 * wts
    B = len(base)
    delta = x[None] - base  # (B, M, K)
    path = base[:, None] + alpha[None, :, None, None] * delta[:, None]  # (B, S, M, K)
    inp = Tensor(path.reshape((B * steps,) + x.shape), requires_grad=True)
    with Tape() as tape:
        out = model(inp)
    if out.ndim != 2 or out.shape[0] != B * steps:
        raise ShapeError(f"model must map (batch, M, K) to (batch, N), got {out.shape}")
    N = out.shape[1]
    weight = np.repeat(w[None, :], B, axis=0).reshape(-1, 1, 1) / B
    dlt = np.repeat(delta, steps, axis=0)
    values = np.empty((N,) + x.shape)
    for i in range(N):
        seed = np.zeros(out.shape)
        seed[:, i] = 1.0
        tape.backward(out, seed=seed)
        g = inp.grad
        if not np.isfinite(g).all():
            raise NumericalError(f"non-finite gradient while attributing output {i}")
        values[i] = np.sum(weight * g * dlt, axis=0)
    fx = model(Tensor(x[None])).values[0]
    fb = model(Tensor(base)).values.mean(axis=0)
    return Attribution(values, fx, fb)


def stock_level_contribution(matrix) -> np.ndarray:
    """Mean over the lookback axis of one stock's ``M x K`` attribution matrix."""
    m = np.asarray(matrix, dtype=float)
    if m.ndim != 2:
        raise ShapeError(f"expected an M x K matrix, got {m.shape}")
    return m.mean(axis=0)


def portfolio_level_contribution(values) -> np.ndarray | None:
    """Mean absolute attribution per factor over stocks and lags, as shares summing to 1.

    Returns ``None`` when every attribution is zero.
    """
    v = np.abs(np.asarray(values, dtype=float))
    if v.ndim != 3:
        raise ShapeError(f"expected N x M x K attributions, got {v.shape}")
    per_factor = v.mean(axis=(0, 1))
    total = per_factor.sum()
    if total == 0.0:
        return None
    return per_factor / total


def emit_attribution_csv(dates: Sequence[str], factor_names: Sequence[str],
                         stock: Mapping[str, np.ndarray], portfolio: np.ndarray, out_dir: str | Path,
                         stock_dates: Mapping[str, Sequence[str]] | None = None) -> Path:
    """Write ``stock_<id>.csv`` files and ``portfolio.csv`` (``date,factor,contribution``).

    ``stock[asset]`` is (dates, K); ``stock_dates`` overrides the dates for
    assets attributed on a subset. Undefined portfolio rows (NaN) are skipped.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    def write(path, ds, rows):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["date", "factor", "contribution"])
            for d, row in zip(ds, rows):
                if np.isnan(row).any():
                    continue
                for name, v in zip(factor_names, row):
                    w.writerow([d, name, repr(float(v))])

    for asset, rows in stock.items():
        write(out / f"stock_{asset}.csv", (stock_dates or {}).get(asset, dates), np.asarray(rows))
    write(out / "portfolio.csv", dates, np.asarray(portfolio))
    return out


def read_attribution_csv(path: str | Path) -> tuple[list[str], list[str], np.ndarray]:
    """Inverse of the writer: (dates, factor names, dates x factors)."""
    cells: dict[tuple[str, str], float] = {}
    dates: list[str] = []
    names: list[str] = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            if row["date"] not in dates:
                dates.append(row["date"])
            if row["factor"] not in names:
                names.append(row["factor"])
            cells[(row["date"], row["factor"])] = float(row["contribution"])
    return dates, names, np.array([[cells[(d, n)] for n in names] for d in dates])
