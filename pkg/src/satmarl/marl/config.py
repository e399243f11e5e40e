from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Tuple

from ..errors import ConfigError

ALGORITHMS = ("ppo", "central_ppo", "ippo", "mappo", "happo")


@dataclass(frozen=True)
class TrainConfig:
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_eps: float = 0.2
    c1: float = 0.5
    c2: float = 0.01
    lr: float = 3e-4
    update_epochs: int = 4
    minibatches: int = 4
    # None means one full episode per collection window.
    rollout_steps: Optional[int] = None
    total_env_steps: int = 20000
    eval_episodes: int = 10
    seeds: Tuple[int, ...] = (0,)
    hidden: Tuple[int, ...] = (64, 64)
    happo_compounding: bool = True

    def __post_init__(self):
        if not (0.0 <= self.gamma <= 1.0 and 0.0 <= self.gae_lambda <= 1.0):
            raise ConfigError("gamma and gae_lambda must lie in [0, 1]")
        if not self.clip_eps > 0:
            raise ConfigError("clip_eps must be > 0")
        if self.lr <= 0 or self.c1 < 0 or self.c2 < 0:
            raise ConfigError("lr must be > 0 and loss coefficients nonnegative")
        if self.update_epochs < 0 or self.minibatches < 1:
            raise ConfigError("update_epochs must be >= 0 and minibatches >= 1")
        if self.total_env_steps < 1 or self.eval_episodes < 0:
            raise ConfigError("total_env_steps must be positive")
        if self.rollout_steps is not None and self.rollout_steps < 1:
            raise ConfigError("rollout_steps must be positive")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
