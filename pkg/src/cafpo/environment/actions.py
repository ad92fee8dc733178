"""Long-short action normalization.

A raw action is any finite vector. Positive entries are scaled to sum to 1
and negative entries to sum to -1. When one side is empty the
smallest-magnitude eligible entry (lowest index on ties) is moved to that
side with a vanishing share; after normalization it carries the whole side.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..errors import DataError, NumericalError

logger = logging.getLogger(__name__)

TOLERANCE = 1e-9
_TINY = np.finfo(float).tiny


@dataclass(frozen=True)
class WeightVector:
    weights: np.ndarray
    degenerate: bool = False
    # long-only books (baselines) have no short side to check
    long_only: bool = False

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def N(self) -> int:
        return len(self.weights)

    @property
    def long(self) -> float:
        return float(self.weights[self.weights > 0].sum())

    @property
    def short(self) -> float:
        return float(self.weights[self.weights < 0].sum())

    def violations(self, tol: float = TOLERANCE) -> list[str]:
        out = []
        if abs(self.long - 1.0) > tol:
            out.append(f"long side sums to {self.long!r}")
        if self.long_only:
            if (self.weights < 0).any():
                out.append("long-only book holds a short position")
        elif abs(self.short + 1.0) > tol:
            out.append(f"short side sums to {self.short!r}")
        if (np.abs(self.weights) > 1.0 + tol).any():
            out.append("a weight lies outside [-1, 1]")
        return out

    def is_valid(self, tol: float = TOLERANCE) -> bool:
        return not self.violations(tol)


def normalize_action(raw, mask=None) -> WeightVector:
    """Map a raw action onto the long-short simplex.

    ``mask`` marks the assets that may hold a position; the others get
    weight 0. At least two eligible assets are required.
    """
    x = np.array(raw, dtype=float).reshape(-1)
    if not np.isfinite(x).all():
        raise NumericalError("raw action contains non-finite entries")
    eligible = np.ones(x.shape, bool) if mask is None else np.asarray(mask, bool).reshape(-1)
    if eligible.shape != x.shape:
        raise DataError(f"mask length {eligible.size} does not match action length {x.size}")
    if eligible.sum() < 2:
        raise DataError(f"a long-short portfolio needs at least 2 eligible assets, got {int(eligible.sum())}")
    x = np.where(eligible, x, 0.0)

    degenerate = False
    has_pos, has_neg = (x > 0).any(), (x < 0).any()
    if not (has_pos and has_neg):
        degenerate = True
        idx = np.flatnonzero(eligible)
        order = idx[np.argsort(np.abs(x[idx]), kind="stable")]
        if not has_pos and not has_neg:
            x[order[0]], x[order[1]] = _TINY, -_TINY
        else:
            x[order[0]] = -_TINY if has_pos else _TINY
        logger.debug("one-sided action resolved by moving asset %d to the empty side", order[0])

    out = np.zeros_like(x)
    pos, neg = x > 0, x < 0
    out[pos] = x[pos] / x[pos].sum()
    out[neg] = x[neg] / -x[neg].sum()
    return WeightVector(out, degenerate)
