"""The portfolio decision process over an exogenous feature series.

A decision at period ``t`` sees the feature rows ``t-M+1 .. t`` and earns
the returns of period ``t+1``. Features are any per-period vectors: factor
realizations for the factor-state agents, raw returns for the vanilla one.
Since actions never move the features, all states of an episode are known
up front, which lets agents batch their forward passes.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from ..errors import DataError, NumericalError, ShapeError
from .actions import WeightVector, normalize_action
from .rewards import REWARD_TAGS, RewardState, compute_reward

# reward handed out on the step that wipes the portfolio out
BANKRUPT_REWARD = math.log(1e-6)


@dataclass(frozen=True)
class PortfolioState:
    window: np.ndarray
    date: str = ""

    def __post_init__(self):
        w = np.array(self.window, dtype=float)
        if w.ndim != 2 or w.shape[0] < 1:
            raise ShapeError(f"state window must be M x K, got shape {w.shape}")
        if not np.isfinite(w).all():
            raise DataError(f"state window at {self.date or '?'} has missing entries")
        w.setflags(write=False)
        object.__setattr__(self, "window", w)

    @property
    def M(self) -> int:
        return self.window.shape[0]


@dataclass(frozen=True)
class EnvStep:
    date: str
    r_p: float
    reward: float
    wealth: float
    weights: WeightVector
    done: bool = False
    bankrupt: bool = False


def portfolio_return(weights, returns, available=None) -> float:
    """``w . r`` with unavailable assets contributing zero."""
    w = weights.weights if isinstance(weights, WeightVector) else np.asarray(weights, dtype=float)
    r = np.asarray(returns, dtype=float)
    if r.shape != w.shape:
        raise ShapeError(f"weights {w.shape} and returns {r.shape} differ")
    if available is not None:
        r = np.where(np.asarray(available, bool), r, 0.0)
    if not np.isfinite(r).all():
        raise NumericalError("non-finite return for an available asset")
    return float(w @ r)


class PortfolioEnv:
    def __init__(self, features: np.ndarray, returns: np.ndarray, available: np.ndarray, dates: Sequence[str],
                 lookback: int = 12, reward: str = "log", eta: float = 0.05, warmup: int = 12):
        self.features = np.asarray(features, dtype=float)
        self.returns = np.where(available, np.asarray(returns, dtype=float), 0.0)
        self.available = np.asarray(available, bool)
        self.dates = tuple(dates)
        T = len(self.dates)
        if self.features.ndim != 2 or self.features.shape[0] != T:
            raise ShapeError(f"features must be T x D with T={T}, got {self.features.shape}")
        if self.returns.shape != self.available.shape or self.returns.shape[0] != T:
            raise ShapeError("returns and availability must be T x N")
        if not np.isfinite(self.features).all():
            raise DataError("feature series has missing entries")
        if lookback < 1:
            raise ShapeError("lookback must be >= 1")
        if reward not in REWARD_TAGS:
            raise DataError(f"unknown reward {reward!r}")
        self.M, self.reward_tag, self.eta, self.warmup = lookback, reward, eta, warmup
        self._t = self._stop = None

    @property
    def N(self) -> int:
        return self.returns.shape[1]

    @property
    def D(self) -> int:
        return self.features.shape[1]

    def observation(self, t: int) -> np.ndarray:
        if t < self.M - 1 or t >= len(self.dates):
            raise DataError(f"no complete {self.M}-period state at index {t}")
        return self.features[t - self.M + 1 : t + 1]

    def observations(self, ts: Sequence[int]) -> np.ndarray:
        return np.stack([self.observation(t) for t in ts])

    def state(self, t: int) -> PortfolioState:
        return PortfolioState(self.observation(t), self.dates[t])

    def decision_indices(self, first: int, stop: int) -> range:
        """Decision periods ``first .. stop-1``; each needs a full window and a next period."""
        if first < self.M - 1 or stop > len(self.dates) - 1 or stop <= first:
            raise DataError(f"cannot run decisions {first}..{stop - 1}: need {self.M - 1} <= first < stop <= "
                            f"{len(self.dates) - 1}")
        return range(first, stop)

    def reset(self, first: int, stop: int) -> np.ndarray:
        self.decision_indices(first, stop)
        self._t, self._stop = first, stop
        self.wealth = 1.0
        self.reward_state = RewardState(eta=self.eta, warmup=self.warmup)
        return self.observation(first)

    def mask(self, t: int) -> np.ndarray:
        return self.available[t]

    def step(self, action) -> EnvStep:
        if self._t is None or self._t >= self._stop:
            raise DataError("episode finished; call reset()")
        t = self._t
        wv = action if isinstance(action, WeightVector) else normalize_action(action, self.available[t])
        if wv.N != self.N:
            raise ShapeError(f"action has {wv.N} weights for {self.N} assets")
        r_p = portfolio_return(wv, self.returns[t + 1], self.available[t + 1])
        self._t += 1
        bankrupt = r_p <= -1.0
        if bankrupt:
            reward, self.wealth = BANKRUPT_REWARD, 0.0
        else:
            reward, self.reward_state = compute_reward(self.reward_tag, r_p, self.reward_state)
            self.wealth *= 1.0 + r_p
        done = bankrupt or self._t >= self._stop
        if done:
            self._t = self._stop
        return EnvStep(self.dates[t + 1], r_p, reward, self.wealth, wv, done, bankrupt)


def step(weights: WeightVector, next_returns, available=None, wealth: float = 1.0, reward: str = "log",
         state: RewardState | None = None, date: str = "") -> tuple[EnvStep, RewardState]:
    """Stateless single step: portfolio return, reward and wealth update."""
    state = state or RewardState()
    r_p = portfolio_return(weights, next_returns, available)
    if r_p <= -1.0:
        return EnvStep(date, r_p, BANKRUPT_REWARD, 0.0, weights, True, True), state
    rew, state = compute_reward(reward, r_p, state)
    return EnvStep(date, r_p, rew, wealth * (1.0 + r_p), weights), state


def write_episode_csv(steps: Sequence[EnvStep], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "r_p", "reward", "wealth"])
        for s in steps:
            w.writerow([s.date, repr(float(s.r_p)), repr(float(s.reward)), repr(float(s.wealth))])


def write_weights_csv(dates: Sequence[str], assets: Sequence[str], weights: np.ndarray, path: str | Path) -> None:
    """Long format ``date,asset,weight``; zero weights are written too."""
    weights = np.asarray(weights, dtype=float)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "asset", "weight"])
        for t, d in enumerate(dates):
            for i, a in enumerate(assets):
                w.writerow([d, a, repr(float(weights[t, i]))])
