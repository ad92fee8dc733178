"""Agent checkpoints: parameter containers plus a JSON manifest."""

from __future__ import annotations

import json
from pathlib import Path

from .. import diffcore as dc
from ..errors import DataError
from .ddpg import DDPGAgent
from .networks import Actor
from .ppo import PPOAgent


def save_agent(agent: PPOAgent | DDPGAgent, directory: str | Path, config_hash: str = "",
               window: tuple[str, str] | None = None) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    actor_state = agent.actor.state_dict()
    algorithm = "PPO" if isinstance(agent, PPOAgent) else "DDPG"
    extra = {"log_std": agent.log_std.values} if algorithm == "PPO" else {}
    dc.save_params({**actor_state, **extra}, directory / "actor.cafw")
    dc.save_params(agent.critic.state_dict(), directory / "critic.cafw")
    manifest = {
        "algorithm": algorithm,
        "config_hash": config_hash,
        "seed": agent.seed,
        "training_window": list(window) if window else None,
        "actor": agent.actor.dims(),
        "actor_shapes": {k: list(v) for k, v in agent.actor.shape_manifest().items()},
        "config": agent.config.to_dict(),
    }
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return directory


def load_actor(directory: str | Path) -> Actor:
    directory = Path(directory)
    try:
        man = json.loads((directory / "manifest.json").read_text())
    except FileNotFoundError:
        raise DataError(f"{directory}: no agent manifest") from None
    d = man["actor"]
    actor = Actor(d["n_features"], d["n_assets"], d["hidden_size"], d["head_sizes"], None)
    params = dc.load_params(directory / "actor.cafw")
    params.pop("log_std", None)
    actor.load_state_dict(params)
    return actor
