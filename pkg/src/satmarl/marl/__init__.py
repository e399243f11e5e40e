"""Rollouts, advantage estimation and the PPO-family trainers."""

from .agents import AgentSet, make_agent_set
from .buffer import RolloutBuffer, collect_rollouts, compute_gae
from .config import ALGORITHMS, TrainConfig
from .evaluate import EvalResult, UniquenessViolation, audit_episode, evaluate
from .loss import LossBatch, normalize_advantages, ppo_loss
from .train import (
    TrainingAborted,
    TrainResult,
    train,
    train_centralised_ppo,
    train_happo,
    train_ippo,
    train_mappo,
    train_single_ppo,
)

__all__ = [
    "ALGORITHMS",
    "AgentSet",
    "EvalResult",
    "LossBatch",
    "RolloutBuffer",
    "TrainConfig",
    "TrainResult",
    "TrainingAborted",
    "UniquenessViolation",
    "audit_episode",
    "collect_rollouts",
    "compute_gae",
    "evaluate",
    "make_agent_set",
    "normalize_advantages",
    "ppo_loss",
    "train",
    "train_centralised_ppo",
    "train_happo",
    "train_ippo",
    "train_mappo",
    "train_single_ppo",
]
