"""Dense tanh networks stored as one flat parameter vector."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

from ..errors import ConfigError, NumericError
from . import autodiff as ad


@dataclass(frozen=True)
class MlpSpec:
    """Architecture of a 2-hidden-layer tanh MLP with a categorical or scalar head.

    ``n_heads > 1`` gives several independent categorical heads over the same
    trunk (a factored joint policy); logits are laid out head-major.
    """

    input_dim: int
    head: str = "categorical"  # or "scalar"
    n_actions: int = 1
    hidden: Tuple[int, ...] = (64, 64)
    n_heads: int = 1

    def __post_init__(self):
        if self.head not in ("categorical", "scalar"):
            raise ConfigError(f"unknown head {self.head!r}")
        dims = (self.input_dim, self.n_actions, self.n_heads, *self.hidden)
        if any(int(d) < 1 for d in dims):
            raise ConfigError(f"all dimensions must be >= 1, got {self}")

    @property
    def output_dim(self) -> int:
        return self.n_heads * self.n_actions if self.head == "categorical" else 1

    def layer_dims(self) -> List[Tuple[int, int]]:
        sizes = [self.input_dim, *self.hidden, self.output_dim]
        return list(zip(sizes[:-1], sizes[1:]))

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "head": self.head,
            "n_actions": self.n_actions,
            "hidden": list(self.hidden),
            "n_heads": self.n_heads,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MlpSpec":
        return cls(
            input_dim=int(d["input_dim"]),
            head=d["head"],
            n_actions=int(d["n_actions"]),
            hidden=tuple(int(h) for h in d["hidden"]),
            n_heads=int(d.get("n_heads", 1)),
        )


@dataclass
class ParamVector:
    spec: MlpSpec
    flat: np.ndarray
    # (name, offset, shape) for W0, b0, W1, b1, ...
    layout: List[Tuple[str, int, Tuple[int, ...]]] = field(default_factory=list)

    def __post_init__(self):
        if not self.layout:
            self.layout = build_layout(self.spec)
        expected = sum(int(np.prod(s)) for _, _, s in self.layout)
        if self.flat.shape != (expected,):
            raise ConfigError(f"parameter vector has {self.flat.size} entries, spec needs {expected}")

    def arrays(self) -> List[np.ndarray]:
        return [self.flat[o : o + int(np.prod(s))].reshape(s) for _, o, s in self.layout]

    def copy(self) -> "ParamVector":
        return ParamVector(self.spec, self.flat.copy(), list(self.layout))

    def __len__(self):
        return self.flat.size


def build_layout(spec: MlpSpec):
    layout = []
    offset = 0
    for k, (n_in, n_out) in enumerate(spec.layer_dims()):
        layout.append((f"W{k}", offset, (n_in, n_out)))
        offset += n_in * n_out
        layout.append((f"b{k}", offset, (n_out,)))
        offset += n_out
    return layout


def init_params(spec: MlpSpec, seed) -> ParamVector:
    """Glorot-uniform weights, zero biases, policy output layer scaled by 0.01."""
    rng = np.random.default_rng(seed)
    layout = build_layout(spec)
    n = sum(int(np.prod(s)) for _, _, s in layout)
    flat = np.zeros(n)
    n_layers = len(spec.layer_dims())
    for name, offset, shape in layout:
        if not name.startswith("W"):
            continue
        fan_in, fan_out = shape
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-limit, limit, size=shape)
        if spec.head == "categorical" and name == f"W{n_layers - 1}":
            w *= 0.01
        flat[offset : offset + w.size] = w.ravel()
    return ParamVector(spec, flat, layout)


# -------------------------------------------------------------- fast paths


def _check_input(obs: np.ndarray, spec: MlpSpec) -> np.ndarray:
    x = np.asarray(obs, dtype=float)
    if x.shape[-1] != spec.input_dim:
        raise ConfigError(f"input has {x.shape[-1]} features, network expects {spec.input_dim}")
    if not np.all(np.isfinite(x)):
        raise NumericError("non-finite network input")
    return x


def _trunk(params: ParamVector, x: np.ndarray) -> np.ndarray:
    arrays = params.arrays()
    h = x
    n_layers = len(arrays) // 2
    for k in range(n_layers):
        h = h @ arrays[2 * k] + arrays[2 * k + 1]
        if k < n_layers - 1:
            h = np.tanh(h)
    return h


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def policy_forward(params: ParamVector, obs):
    """Returns (logits, probs, log_probs, entropy).

    For multi-head specs the arrays gain a head axis: logits has shape
    (..., n_heads, n_actions) and entropy (..., n_heads).
    """
    spec = params.spec
    x = _check_input(obs, spec)
    logits = _trunk(params, x)
    if spec.n_heads > 1:
        logits = logits.reshape(*logits.shape[:-1], spec.n_heads, spec.n_actions)
    logp = log_softmax(logits)
    probs = np.exp(logp)
    ent = -(probs * logp).sum(axis=-1)
    return logits, probs, logp, ent


def value_forward(params: ParamVector, obs):
    x = _check_input(obs, params.spec)
    out = _trunk(params, x)[..., 0]
    return float(out) if out.ndim == 0 else out


# ------------------------------------------------------------ graph paths


def graph_forward(params_t: ad.Tensor, spec: MlpSpec, x: np.ndarray) -> ad.Tensor:
    """Differentiable forward pass; ``params_t`` is a leaf over the flat vector."""
    h = ad.as_tensor(np.atleast_2d(x))
    layout = build_layout(spec)
    n_layers = len(layout) // 2
    for k in range(n_layers):
        _, ow, sw = layout[2 * k]
        _, ob, sb = layout[2 * k + 1]
        h = ad.affine(h, ad.param_slice(params_t, ow, sw), ad.param_slice(params_t, ob, sb))
        if k < n_layers - 1:
            h = ad.tanh(h)
    return h


def graph_policy(params_t: ad.Tensor, spec: MlpSpec, x: np.ndarray) -> ad.Tensor:
    """Differentiable log-probabilities, shape (B, n_actions) or (B, n_heads, n_actions)."""
    logits = graph_forward(params_t, spec, x)
    if spec.n_heads > 1:
        logits = ad.reshape(logits, (logits.shape[0], spec.n_heads, spec.n_actions))
    return ad.log_softmax(logits)


def graph_value(params_t: ad.Tensor, spec: MlpSpec, x: np.ndarray) -> ad.Tensor:
    out = graph_forward(params_t, spec, x)
    return ad.reshape(out, (out.shape[0],))
