"""Actor-critic agents (PPO, DDPG) over factor-window states, and seed ensembles."""

from .checkpoint import load_actor, save_agent
from .ddpg import DDPGAgent, OUNoise, RingBuffer, critic_targets, ddpg_update
from .ensemble import EnsemblePolicy, ensemble_act
from .networks import Actor, AgentConfig, Critic, build_actor, copy_module, soft_update
from .ppo import (
    Episode, PPOAgent, TrajectoryBuffer, act, collect_episode, compute_gae, gaussian_log_prob, ppo_losses, ppo_update,
)
from .training import ALGORITHMS, evaluate_ensemble, run_policy, train_agent, train_ddpg, train_ppo

__all__ = [
    "ALGORITHMS", "Actor", "AgentConfig", "Critic", "DDPGAgent", "EnsemblePolicy", "Episode", "OUNoise", "PPOAgent",
    "RingBuffer", "TrajectoryBuffer", "act", "build_actor", "collect_episode", "compute_gae", "copy_module",
    "critic_targets", "ddpg_update", "ensemble_act", "evaluate_ensemble", "gaussian_log_prob", "load_actor", "ppo_losses",
    "ppo_update", "run_policy", "save_agent", "soft_update", "train_agent", "train_ddpg", "train_ppo",
]
