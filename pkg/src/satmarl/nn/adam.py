from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Tuple

import numpy as np

from ..errors import ConfigError


@dataclass(frozen=True)
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, n: int, lr: float = 3e-4) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), 0, lr)


def adam_step(params: np.ndarray, grads: np.ndarray, state: AdamState) -> Tuple[np.ndarray, AdamState]:
    """One bias-corrected Adam update; returns new arrays, inputs are untouched."""
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise ConfigError("parameter, gradient and moment vectors must have the same length")
    t = state.t + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    v = state.beta2 * state.v + (1.0 - state.beta2) * grads * grads
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    new = params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return new, replace(state, m=m, v=v, t=t)
