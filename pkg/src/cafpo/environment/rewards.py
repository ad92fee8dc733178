"""Per-step rewards: log return, differential Sharpe ratio, differential DDR.

The differential rewards are first-order sensitivities of an exponentially
weighted Sharpe (or downside deviation) ratio to the newest return. Their
moment estimates start from the plain averages of the first ``warmup``
returns; until then the reward is 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from ..errors import ConfigError, NumericalError

SINGULAR_FLOOR = 1e-12
REWARD_TAGS = ("log", "diff-sharpe", "diff-ddr")


@dataclass(frozen=True)
class RewardState:
    A: float = 0.0
    B: float = 0.0
    DD2: float = 0.0
    eta: float = 0.05
    warmup: int = 12
    history: tuple[float, ...] = ()

    @property
    def ready(self) -> bool:
        return len(self.history) >= self.warmup

    def observe(self, r_p: float) -> "RewardState":
        """Advance the moment estimates by one return."""
        if not self.ready:
            hist = self.history + (r_p,)
            if len(hist) < self.warmup:
                return replace(self, history=hist)
            n = len(hist)
            return replace(self, history=hist, A=sum(hist) / n, B=sum(r * r for r in hist) / n,
                           DD2=sum(min(r, 0.0) ** 2 for r in hist) / n)
        eta = self.eta
        return replace(self, A=self.A + eta * (r_p - self.A), B=self.B + eta * (r_p * r_p - self.B),
                       DD2=self.DD2 + eta * (min(r_p, 0.0) ** 2 - self.DD2))

    def sharpe(self) -> float:
        return self.A / math.sqrt(self.B - self.A * self.A)

    def ddr(self) -> float:
        return self.A / math.sqrt(self.DD2)


def reward_log(r_p: float) -> float:
    if not r_p > -1.0:
        raise NumericalError(f"portfolio return {r_p} <= -1: bankrupt")
    return math.log1p(r_p)


def differential_sharpe(r_p: float, A: float, B: float) -> float:
    var = B - A * A
    if var <= SINGULAR_FLOOR:
        return 0.0
    dA, dB = r_p - A, r_p * r_p - B
    return (B * dA - 0.5 * A * dB) / var ** 1.5


def differential_ddr(r_p: float, A: float, DD2: float) -> float:
    if DD2 <= 0.0 or math.sqrt(DD2) <= SINGULAR_FLOOR:
        return 0.0
    dd = math.sqrt(DD2)
    if r_p > 0:
        return (r_p - 0.5 * A) / dd
    return (DD2 * (r_p - 0.5 * A) - 0.5 * A * r_p * r_p) / dd ** 3


def reward_diff_sharpe(r_p: float, state: RewardState) -> tuple[float, RewardState]:
    reward = differential_sharpe(r_p, state.A, state.B) if state.ready else 0.0
    return reward, state.observe(r_p)


def reward_diff_ddr(r_p: float, state: RewardState) -> tuple[float, RewardState]:
    reward = differential_ddr(r_p, state.A, state.DD2) if state.ready else 0.0
    return reward, state.observe(r_p)


def compute_reward(tag: str, r_p: float, state: RewardState) -> tuple[float, RewardState]:
    if tag == "log":
        return reward_log(r_p), state
    if tag == "diff-sharpe":
        return reward_diff_sharpe(r_p, state)
    if tag == "diff-ddr":
        return reward_diff_ddr(r_p, state)
    raise ConfigError(f"unknown reward {tag!r}; expected one of {REWARD_TAGS}")
