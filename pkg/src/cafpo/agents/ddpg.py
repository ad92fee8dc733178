"""Deep deterministic policy gradient with target networks and a ring buffer."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import diffcore as dc
from ..diffcore import Adam, Tape, Tensor
from ..errors import DataError
from .networks import AgentConfig, Critic, build_actor, copy_module, soft_update


class RingBuffer:
    """Fixed-capacity transition store; the oldest entries are overwritten first."""

    def __init__(self, capacity: int, state_shape: tuple[int, ...], action_dim: int):
        if capacity < 1:
            raise DataError("buffer capacity must be positive")
        self.capacity = capacity
        self.states = np.zeros((capacity, *state_shape))
        self.actions = np.zeros((capacity, action_dim))
        self.rewards = np.zeros(capacity)
        self.next_states = np.zeros((capacity, *state_shape))
        self.dones = np.zeros(capacity)
        self._ptr = 0
        self._size = 0

    def __len__(self) -> int:
        return self._size

    def add(self, state, action, reward: float, next_state, done: bool) -> None:
        i = self._ptr
        self.states[i], self.actions[i], self.rewards[i] = state, action, reward
        self.next_states[i], self.dones[i] = next_state, float(done)
        self._ptr = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator):
        if batch_size > self._size:
            raise DataError(f"cannot sample {batch_size} transitions from a buffer holding {self._size}")
        idx = rng.choice(self._size, size=batch_size, replace=False)
        return self.states[idx], self.actions[idx], self.rewards[idx], self.next_states[idx], self.dones[idx]


@dataclass
class OUNoise:
    size: int
    sigma: float = 0.1
    theta: float = 0.15

    def __post_init__(self):
        self.x = np.zeros(self.size)

    def reset(self) -> None:
        self.x = np.zeros(self.size)

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        self.x = self.x - self.theta * self.x + self.sigma * rng.normal(size=self.size)
        return self.x


class DDPGAgent:
    def __init__(self, n_features: int, n_assets: int, config: AgentConfig | None = None, seed: int = 0):
        self.config = config or AgentConfig()
        self.config.validate()
        cfg = self.config
        self.seed = seed
        init = np.random.default_rng(seed)
        self.actor = build_actor(n_features, n_assets, cfg, init)
        self.critic = Critic(n_features, cfg.hidden_size, cfg.head_sizes, n_assets, init)
        self.actor_target = build_actor(n_features, n_assets, cfg, None)
        self.critic_target = Critic(n_features, cfg.hidden_size, cfg.head_sizes, n_assets, None)
        copy_module(self.actor, self.actor_target)
        copy_module(self.critic, self.critic_target)
        self.actor_opt = Adam(self.actor.parameters(), lr=cfg.actor_lr, max_grad_norm=cfg.max_grad_norm)
        self.critic_opt = Adam(self.critic.parameters(), lr=cfg.critic_lr, max_grad_norm=cfg.max_grad_norm)
        self.rng = np.random.default_rng([seed, 2])
        self.ou = OUNoise(n_assets, cfg.noise_sigma, cfg.ou_theta)

    @property
    def N(self) -> int:
        return self.actor.N

    def explore(self, state) -> np.ndarray:
        mu = self.actor(np.asarray(state, dtype=float)).values[0]
        if self.config.exploration == "ou":
            return mu + self.ou.sample(self.rng)
        return mu + self.config.noise_sigma * self.rng.normal(size=mu.shape)


def critic_targets(agent: DDPGAgent, rewards, next_states, dones, gamma: float) -> np.ndarray:
    """``r + gamma * Q'(s', mu'(s'))``, with no bootstrap past a terminal step."""
    q_next = agent.critic_target(next_states, agent.actor_target(next_states).values).values
    return rewards + gamma * (1.0 - dones) * q_next


def ddpg_update(agent: DDPGAgent, buffer: RingBuffer, config: AgentConfig | None = None) -> dict:
    """One critic regression step, one actor ascent step, then soft target updates."""
    cfg = config or agent.config
    if len(buffer) < cfg.batch_size:
        raise DataError(f"DDPG update needs {cfg.batch_size} transitions, buffer holds {len(buffer)}")
    s, a, r, s2, done = buffer.sample(cfg.batch_size, agent.rng)
    y = critic_targets(agent, r, s2, done, cfg.gamma)

    with Tape() as tape:
        closs = dc.mse(agent.critic(s, a), Tensor(y))
    tape.backward(closs, params=agent.critic.parameters())
    agent.critic_opt.step()

    with Tape() as tape:
        q = agent.critic(s, agent.actor(s))
        aloss = -dc.mean(q)
    tape.backward(aloss, params=agent.actor.parameters())
    agent.actor_opt.step()

    soft_update(agent.actor_target, agent.actor, cfg.tau)
    soft_update(agent.critic_target, agent.critic, cfg.tau)
    return {"critic_loss": closs.item(), "actor_loss": aloss.item(), "q_mean": float(np.mean(q.values)),
            "target_mean": float(np.mean(y))}
