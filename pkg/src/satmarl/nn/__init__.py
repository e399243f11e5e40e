"""Minimal numpy network substrate: tanh MLPs, reverse-mode gradients, Adam."""

from . import autodiff
from .adam import AdamState, adam_step
from .autodiff import Tensor, backward
from .checkpoint import CheckpointError, load_params, save_params
from .mlp import (
    MlpSpec,
    ParamVector,
    graph_policy,
    graph_value,
    init_params,
    policy_forward,
    value_forward,
)

__all__ = [
    "AdamState",
    "CheckpointError",
    "MlpSpec",
    "ParamVector",
    "Tensor",
    "adam_step",
    "autodiff",
    "backward",
    "graph_policy",
    "graph_value",
    "init_params",
    "load_params",
    "policy_forward",
    "save_params",
    "value_forward",
]
