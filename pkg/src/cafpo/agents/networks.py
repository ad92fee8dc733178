"""Actor and critic networks shared by both algorithms.

Both read an ``M x D`` state window through an LSTM encoder and finish with
a small tanh feed-forward head. PPO and DDPG build their actors from the
same constructor, so the two algorithms share one actor architecture.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .. import diffcore as dc
from ..diffcore import MLP, LSTMCell, Module, Tensor
from ..errors import ConfigError, ShapeError


@dataclass
class AgentConfig:
    hidden_size: int = 16
    head_sizes: list[int] = field(default_factory=lambda: [32])
    lookback: int = 12
    actor_lr: float = 1e-3
    critic_lr: float = 1e-3
    gamma: float = 0.99
    max_grad_norm: float | None = 1.0
    # PPO
    gae_lambda: float = 0.95
    clip_ratio: float = 0.2
    ppo_epochs: int = 4
    minibatch_size: int | None = None
    entropy_coef: float = 0.0
    init_log_std: float = -1.0
    episodes_per_update: int = 1
    # DDPG
    tau: float = 0.005
    buffer_capacity: int = 10000
    batch_size: int = 64
    exploration: str = "gaussian"
    noise_sigma: float = 0.1
    ou_theta: float = 0.15
    learning_starts: int | None = None

    def validate(self) -> None:
        if self.hidden_size < 1 or self.lookback < 1 or any(h < 1 for h in self.head_sizes):
            raise ConfigError("network sizes and lookback must be positive")
        if not 0.0 <= self.gamma <= 1.0 or not 0.0 <= self.gae_lambda <= 1.0:
            raise ConfigError("gamma and gae_lambda must lie in [0, 1]")
        if not 0.0 < self.tau <= 1.0:
            raise ConfigError("tau must lie in (0, 1]")
        if self.clip_ratio <= 0 or self.ppo_epochs < 1 or self.batch_size < 1 or self.buffer_capacity < 1:
            raise ConfigError("clip_ratio, ppo_epochs, batch_size and buffer_capacity must be positive")
        if self.exploration not in ("gaussian", "ou"):
            raise ConfigError(f"exploration must be 'gaussian' or 'ou', got {self.exploration!r}")

    def to_dict(self) -> dict:
        return asdict(self)


def _check_states(states, D: int) -> Tensor:
    states = states if isinstance(states, Tensor) else Tensor(states)
    if states.ndim == 2:
        states = dc.reshape(states, (1,) + states.shape)
    if states.ndim != 3 or states.shape[-1] != D:
        raise ShapeError(f"states must be (batch, M, {D}), got {states.shape}")
    return states


class Actor(Module):
    """State window -> N raw action values in (-1, 1)."""

    def __init__(self, n_features: int, n_assets: int, hidden_size: int = 16, head_sizes=(32,),
                 rng: np.random.Generator | None = None):
        super().__init__()
        self.D, self.N = n_features, n_assets
        self.encoder = self.add_module("encoder", LSTMCell(n_features, hidden_size, rng))
        self.head = self.add_module("head", MLP([hidden_size, *head_sizes, n_assets], rng, "tanh", "tanh"))

    def __call__(self, states) -> Tensor:
        """(batch, M, D) -> (batch, N); a single (M, D) window gives batch 1."""
        s = _check_states(states, self.D)
        return self.head(self.encoder(s))

    def dims(self) -> dict:
        return {"n_features": self.D, "n_assets": self.N, "hidden_size": self.encoder.hidden_size,
                "head_sizes": [layer.W.shape[1] for layer in self.head.layers[:-1]]}


class Critic(Module):
    """V(s) when ``action_dim`` is 0, otherwise Q(s, a) with the action joined at the head."""

    def __init__(self, n_features: int, hidden_size: int = 16, head_sizes=(32,), action_dim: int = 0,
                 rng: np.random.Generator | None = None):
        super().__init__()
        self.D, self.action_dim = n_features, action_dim
        self.encoder = self.add_module("encoder", LSTMCell(n_features, hidden_size, rng))
        self.head = self.add_module("head", MLP([hidden_size + action_dim, *head_sizes, 1], rng, "tanh"))

    def __call__(self, states, actions=None) -> Tensor:
        s = _check_states(states, self.D)
        h = self.encoder(s)
        if self.action_dim:
            if actions is None:
                raise ShapeError("Q critic needs an action")
            a = actions if isinstance(actions, Tensor) else Tensor(actions)
            if a.shape != (h.shape[0], self.action_dim):
                raise ShapeError(f"actions must be ({h.shape[0]}, {self.action_dim}), got {a.shape}")
            h = dc.concat([h, a], axis=-1)
        out = self.head(h)
        return dc.reshape(out, out.shape[:-1])


def build_actor(n_features: int, n_assets: int, config: AgentConfig, rng) -> Actor:
    return Actor(n_features, n_assets, config.hidden_size, config.head_sizes, rng)


def copy_module(src: Module, dst: Module) -> None:
    dst.load_state_dict(src.state_dict())


def soft_update(target: Module, online: Module, tau: float) -> None:
    """``target <- tau * online + (1 - tau) * target``."""
    for (_, t), (_, o) in zip(target.named_parameters(), online.named_parameters()):
        t.values = tau * o.values + (1.0 - tau) * t.values
