"""Portfolio environment: actions, rewards, metrics and episodes."""

from .actions import TOLERANCE, WeightVector, normalize_action
from .env import (
    BANKRUPT_REWARD, EnvStep, PortfolioEnv, PortfolioState, portfolio_return, step, write_episode_csv,
    write_weights_csv,
)
from .metrics import (
    compound_return, drawdown_from_wealth, max_drawdown, sharpe_ratio, sterling_ratio, summarize, wealth_curve,
)
from .rewards import (
    REWARD_TAGS, SINGULAR_FLOOR, RewardState, compute_reward, differential_ddr, differential_sharpe,
    reward_diff_ddr, reward_diff_sharpe, reward_log,
)

__all__ = [
    "BANKRUPT_REWARD", "EnvStep", "PortfolioEnv", "PortfolioState", "REWARD_TAGS", "RewardState",
    "SINGULAR_FLOOR", "TOLERANCE", "WeightVector", "compound_return", "compute_reward", "differential_ddr",
    "differential_sharpe", "drawdown_from_wealth", "max_drawdown", "normalize_action", "portfolio_return",
    "reward_diff_ddr", "reward_diff_sharpe", "reward_log", "sharpe_ratio", "step", "sterling_ratio", "summarize",
    "wealth_curve", "write_episode_csv", "write_weights_csv",
]
