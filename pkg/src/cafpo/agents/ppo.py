"""Proximal policy optimization with a diagonal Gaussian policy over raw actions.

The policy mean is the actor output; exploration noise comes from a
learned per-asset log standard deviation. Normalization onto the
long-short simplex happens inside the environment, so the density stays
an ordinary Gaussian.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .. import diffcore as dc
from ..diffcore import Adam, Tape, Tensor
from ..environment import PortfolioEnv
from ..errors import DataError, ShapeError
from .networks import AgentConfig, Critic, build_actor

LOG_2PI = math.log(2.0 * math.pi)
# keeps exp() of the log-ratio finite on pathological minibatches
MAX_LOG_RATIO = 20.0


class PPOAgent:
    def __init__(self, n_features: int, n_assets: int, config: AgentConfig | None = None, seed: int = 0):
        self.config = config or AgentConfig()
        self.config.validate()
        cfg = self.config
        self.seed = seed
        init = np.random.default_rng(seed)
        self.actor = build_actor(n_features, n_assets, cfg, init)
        self.critic = Critic(n_features, cfg.hidden_size, cfg.head_sizes, 0, init)
        self.log_std = Tensor(np.full(n_assets, cfg.init_log_std), requires_grad=True, name="log_std")
        self.actor_params = self.actor.parameters() + [self.log_std]
        self.actor_opt = Adam(self.actor_params, lr=cfg.actor_lr, max_grad_norm=cfg.max_grad_norm)
        self.critic_opt = Adam(self.critic.parameters(), lr=cfg.critic_lr, max_grad_norm=cfg.max_grad_norm)
        self.rng = np.random.default_rng([seed, 1])

    @property
    def N(self) -> int:
        return self.actor.N


def gaussian_log_prob(actions, mean, log_std):
    """Row-wise log density of a diagonal Gaussian; works on arrays or tensors."""
    if isinstance(mean, Tensor):
        z = (Tensor(actions) - mean) * dc.exp(-log_std)
        return dc.sum(dc.square(z), axis=-1) * -0.5 - dc.sum(log_std) - 0.5 * mean.shape[-1] * LOG_2PI
    z = (actions - mean) * np.exp(-log_std)
    return -0.5 * np.sum(z * z, axis=-1) - np.sum(log_std) - 0.5 * mean.shape[-1] * LOG_2PI


def act(actor, state, mode: str = "deterministic", log_std=None, rng: np.random.Generator | None = None,
        noise_scale: float | None = None) -> np.ndarray:
    """Raw action for one ``M x D`` window (or a batch of them).

    ``stochastic`` draws from the Gaussian policy given ``log_std``; without
    ``log_std`` it adds isotropic noise of ``noise_scale`` (DDPG exploration).
    """
    states = np.asarray(state, dtype=float)
    single = states.ndim == 2
    mu = actor(states).values
    if mode == "stochastic":
        if rng is None:
            raise ValueError("stochastic mode needs a random generator")
        if log_std is not None:
            std = np.exp(log_std.values if isinstance(log_std, Tensor) else np.asarray(log_std))
        else:
            std = 0.0 if noise_scale is None else noise_scale
        mu = mu + std * rng.normal(size=mu.shape)
    elif mode != "deterministic":
        raise ValueError(f"unknown mode {mode!r}")
    return mu[0] if single else mu


@dataclass
class Episode:
    states: np.ndarray
    actions: np.ndarray
    log_probs: np.ndarray
    rewards: np.ndarray
    values: np.ndarray
    last_value: float
    portfolio_returns: np.ndarray

    def __len__(self) -> int:
        return len(self.rewards)


@dataclass
class TrajectoryBuffer:
    episodes: list[Episode] = field(default_factory=list)

    def add(self, episode: Episode) -> None:
        self.episodes.append(episode)

    def clear(self) -> None:
        self.episodes.clear()

    def __len__(self) -> int:
        return sum(len(e) for e in self.episodes)


def compute_gae(rewards, values, last_value: float, gamma: float, lam: float) -> tuple[np.ndarray, np.ndarray]:
    """Generalized advantage estimates and the matching value targets."""
    rewards, values = np.asarray(rewards, float), np.asarray(values, float)
    T = len(rewards)
    adv = np.zeros(T)
    nxt_v, acc = last_value, 0.0
    for t in range(T - 1, -1, -1):
        delta = rewards[t] + gamma * nxt_v - values[t]
        acc = delta + gamma * lam * acc
        adv[t] = acc
        nxt_v = values[t]
    return adv, adv + values


def collect_episode(agent: PPOAgent, env: PortfolioEnv, first: int, stop: int) -> Episode:
    """Run the stochastic policy over decisions ``first .. stop-1``.

    Features do not react to actions, so all states are evaluated in one
    batched pass before stepping.
    """
    ts = env.decision_indices(first, stop)
    S = env.observations(list(ts) + [stop])
    mu = agent.actor(S[:-1]).values
    log_std = agent.log_std.values
    A = mu + np.exp(log_std) * agent.rng.normal(size=mu.shape)
    logp = gaussian_log_prob(A, mu, log_std)
    V = agent.critic(S).values
    env.reset(first, stop)
    rewards, rps = [], []
    bankrupt = False
    for k in range(len(ts)):
        st = env.step(A[k])
        rewards.append(st.reward)
        rps.append(st.r_p)
        if st.done:
            bankrupt = st.bankrupt
            break
    n = len(rewards)
    last = 0.0 if bankrupt else float(V[n])
    return Episode(S[:n], A[:n], logp[:n], np.array(rewards), V[:n], last, np.array(rps))


def ppo_losses(agent: PPOAgent, states, actions, old_logp, advantages, clip_ratio: float, entropy_coef: float = 0.0):
    """Clipped surrogate loss (to minimize) plus the per-sample ratios."""
    mu = agent.actor(states)
    logp = gaussian_log_prob(actions, mu, agent.log_std)
    log_ratio = dc.clip(logp - Tensor(old_logp), -MAX_LOG_RATIO, MAX_LOG_RATIO)
    ratio = dc.exp(log_ratio)
    adv = Tensor(advantages)
    surr = dc.minimum(ratio * adv, dc.clip(ratio, 1.0 - clip_ratio, 1.0 + clip_ratio) * adv)
    loss = -dc.mean(surr)
    if entropy_coef:
        loss = loss - entropy_coef * dc.sum(agent.log_std)
    return loss, ratio.values, logp.values


def ppo_update(agent: PPOAgent, buffer: TrajectoryBuffer, config: AgentConfig | None = None) -> dict:
    """Several epochs of minibatch Adam on the clipped objective and the value MSE.

    Advantages are standardized when there is more than one sample with
    nonzero spread. The buffer is cleared afterwards.
    """
    cfg = config or agent.config
    if len(buffer) == 0:
        raise DataError("PPO update needs at least one collected transition")
    advs, rets = [], []
    for ep in buffer.episodes:
        a, r = compute_gae(ep.rewards, ep.values, ep.last_value, cfg.gamma, cfg.gae_lambda)
        advs.append(a)
        rets.append(r)
    S = np.concatenate([e.states for e in buffer.episodes])
    A = np.concatenate([e.actions for e in buffer.episodes])
    L = np.concatenate([e.log_probs for e in buffer.episodes])
    adv, ret = np.concatenate(advs), np.concatenate(rets)
    if A.shape[1] != agent.N:
        raise ShapeError(f"buffer actions have width {A.shape[1]}, policy has {agent.N}")
    sd = adv.std()
    if len(adv) > 1 and sd > 1e-8:
        adv = (adv - adv.mean()) / sd
    n = len(adv)
    bs = n if not cfg.minibatch_size else min(cfg.minibatch_size, n)
    clip_fracs, kls, pls, vls = [], [], [], []
    for _ in range(cfg.ppo_epochs):
        order = np.arange(n) if bs == n else agent.rng.permutation(n)
        for s in range(0, n, bs):
            idx = order[s : s + bs]
            with Tape() as tape:
                loss, ratio, logp = ppo_losses(agent, S[idx], A[idx], L[idx], adv[idx], cfg.clip_ratio,
                                               cfg.entropy_coef)
            tape.backward(loss, params=agent.actor_params)
            agent.actor_opt.step()
            with Tape() as tape:
                vloss = dc.mse(agent.critic(S[idx]), Tensor(ret[idx]))
            tape.backward(vloss, params=agent.critic.parameters())
            agent.critic_opt.step()
            clip_fracs.append(float(np.mean(np.abs(ratio - 1.0) > cfg.clip_ratio)))
            kls.append(float(np.mean(L[idx] - logp)))
            pls.append(loss.item())
            vls.append(vloss.item())
    buffer.clear()
    return {"policy_loss": float(np.mean(pls)), "value_loss": float(np.mean(vls)),
            "clip_fraction": float(np.mean(clip_fracs)), "approx_kl": float(np.mean(kls)),
            "log_std_mean": float(np.mean(agent.log_std.values))}
