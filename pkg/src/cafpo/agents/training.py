"""Training loops and policy evaluation on a :class:`PortfolioEnv`."""

from __future__ import annotations

import logging
from typing import Callable

import numpy as np

from ..environment import EnvStep, PortfolioEnv
from ..errors import ConfigError
from .ddpg import DDPGAgent, RingBuffer, ddpg_update
from .ensemble import EnsemblePolicy
from .networks import AgentConfig
from .ppo import PPOAgent, TrajectoryBuffer, collect_episode, ppo_update

logger = logging.getLogger(__name__)

ALGORITHMS = ("PPO", "DDPG")


def _episode_bounds(rng, first: int, stop: int, length: int | None) -> tuple[int, int]:
    if not length or length >= stop - first:
        return first, stop
    start = int(rng.integers(first, stop - length + 1))
    return start, start + length


def train_ppo(env: PortfolioEnv, first: int, stop: int, config: AgentConfig | None = None, seed: int = 0,
              n_updates: int = 50, episode_length: int | None = None) -> tuple[PPOAgent, list[dict]]:
    """Alternate episode collection and PPO updates over decisions ``first .. stop-1``.

    With ``episode_length`` each episode is a random contiguous slice of the
    span; otherwise every episode is the whole span.
    """
    agent = PPOAgent(env.D, env.N, config, seed)
    cfg = agent.config
    buffer = TrajectoryBuffer()
    history = []
    for u in range(n_updates):
        rewards = []
        for _ in range(cfg.episodes_per_update):
            ep = collect_episode(agent, env, *_episode_bounds(agent.rng, first, stop, episode_length))
            buffer.add(ep)
            rewards.append(float(np.mean(ep.rewards)))
        diag = ppo_update(agent, buffer, cfg)
        diag["mean_reward"] = float(np.mean(rewards))
        history.append(diag)
        logger.debug("ppo seed %d update %d: reward %.4g kl %.3g", seed, u, diag["mean_reward"], diag["approx_kl"])
    return agent, history


def train_ddpg(env: PortfolioEnv, first: int, stop: int, config: AgentConfig | None = None, seed: int = 0,
               n_episodes: int = 20, episode_length: int | None = None,
               updates_per_step: int = 1) -> tuple[DDPGAgent, list[dict]]:
    agent = DDPGAgent(env.D, env.N, config, seed)
    cfg = agent.config
    buffer = RingBuffer(cfg.buffer_capacity, (env.M, env.D), env.N)
    starts = cfg.batch_size if cfg.learning_starts is None else max(cfg.learning_starts, cfg.batch_size)
    history = []
    for e in range(n_episodes):
        lo, hi = _episode_bounds(agent.rng, first, stop, episode_length)
        env.reset(lo, hi)
        agent.ou.reset()
        rewards, closses = [], []
        for t in range(lo, hi):
            s = env.observation(t)
            a = agent.explore(s)
            st = env.step(a)
            buffer.add(s, a, st.reward, env.observation(t + 1), st.bankrupt)
            rewards.append(st.reward)
            if len(buffer) >= starts:
                for _ in range(updates_per_step):
                    closses.append(ddpg_update(agent, buffer, cfg)["critic_loss"])
            if st.done:
                break
        history.append({"mean_reward": float(np.mean(rewards)),
                        "critic_loss": float(np.mean(closses)) if closses else None})
        logger.debug("ddpg seed %d episode %d: reward %.4g", seed, e, history[-1]["mean_reward"])
    return agent, history


def train_agent(algorithm: str, env: PortfolioEnv, first: int, stop: int, config: AgentConfig, seed: int,
                iterations: int, episode_length: int | None = None):
    if algorithm == "PPO":
        return train_ppo(env, first, stop, config, seed, iterations, episode_length)
    if algorithm == "DDPG":
        return train_ddpg(env, first, stop, config, seed, iterations, episode_length)
    raise ConfigError(f"unknown algorithm {algorithm!r}; expected one of {ALGORITHMS}")


def run_policy(env: PortfolioEnv, first: int, stop: int, policy: Callable[[np.ndarray, int], object]) -> list[EnvStep]:
    """Step ``policy(state, t)`` through decisions ``first .. stop-1`` and return the trace."""
    env.reset(first, stop)
    steps = []
    for t in range(first, stop):
        st = env.step(policy(env.observation(t), t))
        steps.append(st)
        if st.done:
            break
    return steps


def evaluate_ensemble(ensemble: EnsemblePolicy, env: PortfolioEnv, first: int, stop: int) -> list[EnvStep]:
    """Deterministic evaluation; weights for all dates come from one batched pass."""
    ts = list(env.decision_indices(first, stop))
    wvs = ensemble.weights(env.observations(ts), env.available[ts])
    return run_policy(env, first, stop, lambda _s, t: wvs[t - first])
