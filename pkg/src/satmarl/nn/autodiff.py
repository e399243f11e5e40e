"""Graph-based reverse-mode differentiation over numpy arrays.

Each :class:`Tensor` remembers its parents and a closure that pushes its
output gradient back to them. :func:`backward` topologically sorts the graph
reachable from a scalar loss and runs the closures in reverse.

Only the primitives defined in this module are differentiable; anything else
reaching :func:`backward` is rejected.
"""

from __future__ import annotations

from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..errors import ContractError

SUPPORTED_OPS = frozenset(
    {
        "leaf",
        "const",
        "slice",
        "affine",
        "tanh",
        "add",
        "sub",
        "mul",
        "neg",
        "exp",
        "square",
        "clip",
        "minimum",
        "mean",
        "sum",
        "reshape",
        "log_softmax",
        "take",
        "entropy",
        "scale",
    }
)


class Tensor:
    __slots__ = ("value", "grad", "parents", "op", "_backward")

    def __init__(
        self,
        value,
        parents: Tuple["Tensor", ...] = (),
        op: str = "leaf",
        backward: Optional[Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]] = None,
    ):
        self.value = np.asarray(value, dtype=float)
        self.grad: Optional[np.ndarray] = None
        self.parents = parents
        self.op = op
        self._backward = backward

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Tensor(op={self.op}, shape={self.value.shape})"

    # Operator sugar for the handful of ops used in loss expressions.
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x, op="const")


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# ---------------------------------------------------------------- primitives


def param_slice(flat: Tensor, offset: int, shape) -> Tensor:
    """View of ``flat[offset:offset+size]`` reshaped to ``shape``."""
    size = int(np.prod(shape))
    value = flat.value[offset : offset + size].reshape(shape)
    n = flat.value.size

    def bw(g):
        full = np.zeros(n)
        full[offset : offset + size] = g.ravel()
        return (full,)

    return Tensor(value, (flat,), "slice", bw)


def affine(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """``x @ w + b`` for a batch ``x`` of shape (B, n_in)."""
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    out = x.value @ w.value + b.value

    def bw(g):
        return g @ w.value.T, x.value.T @ g, g.sum(axis=0)

    return Tensor(out, (x, w, b), "affine", bw)


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.value)
    return Tensor(y, (x,), "tanh", lambda g: (g * (1.0 - y * y),))


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return Tensor(
        a.value + b.value,
        (a, b),
        "add",
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return Tensor(
        a.value - b.value,
        (a, b),
        "sub",
        lambda g: (_unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)),
    )


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return Tensor(
        a.value * b.value,
        (a, b),
        "mul",
        lambda g: (_unbroadcast(g * b.value, a.shape), _unbroadcast(g * a.value, b.shape)),
    )


def scale(a: Tensor, c: float) -> Tensor:
    return Tensor(a.value * c, (a,), "scale", lambda g: (g * c,))


def neg(a: Tensor) -> Tensor:
    return Tensor(-a.value, (a,), "neg", lambda g: (-g,))


def exp(a: Tensor) -> Tensor:
    y = np.exp(a.value)
    return Tensor(y, (a,), "exp", lambda g: (g * y,))


def square(a: Tensor) -> Tensor:
    return Tensor(a.value**2, (a,), "square", lambda g: (2.0 * g * a.value,))


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    """clip(x) = min(max(x, lo), hi); ties pass the gradient to ``x``."""
    inside = (a.value >= lo) & (a.value <= hi)
    return Tensor(np.clip(a.value, lo, hi), (a,), "clip", lambda g: (g * inside,))


def minimum(a, b) -> Tensor:
    """Elementwise min; at ties the first argument receives the gradient."""
    a, b = as_tensor(a), as_tensor(b)
    pick_a = a.value <= b.value
    return Tensor(
        np.where(pick_a, a.value, b.value),
        (a, b),
        "minimum",
        lambda g: (_unbroadcast(g * pick_a, a.shape), _unbroadcast(g * ~pick_a, b.shape)),
    )


def mean(a: Tensor, weights: Optional[np.ndarray] = None) -> Tensor:
    """Mean over all elements, or a weighted mean when ``weights`` is given."""
    if weights is None:
        n = a.value.size
        return Tensor(a.value.mean(), (a,), "mean", lambda g: (np.full(a.shape, g / n),))
    w = np.asarray(weights, dtype=float)
    total = w.sum()
    if total <= 0:
        return Tensor(0.0, (a,), "mean", lambda g: (np.zeros(a.shape),))
    return Tensor(
        float((a.value * w).sum() / total), (a,), "mean", lambda g: (g * w / total,)
    )


def total(a: Tensor, axis: Optional[int] = None) -> Tensor:
    out = a.value.sum(axis=axis)

    def bw(g):
        if axis is None:
            return (np.full(a.shape, g),)
        return (np.broadcast_to(np.expand_dims(g, axis), a.shape).copy(),)

    return Tensor(out, (a,), "sum", bw)


def reshape(a: Tensor, shape) -> Tensor:
    return Tensor(a.value.reshape(shape), (a,), "reshape", lambda g: (g.reshape(a.shape),))


def log_softmax(logits: Tensor) -> Tensor:
    """Row-wise log-softmax over the last axis, with max subtraction."""
    z = logits.value - logits.value.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    out = z - lse
    p = np.exp(out)

    def bw(g):
        return (g - p * g.sum(axis=-1, keepdims=True),)

    return Tensor(out, (logits,), "log_softmax", bw)


def take(logp: Tensor, actions: np.ndarray) -> Tensor:
    """Select ``logp[..., actions]`` along the last axis (categorical log-prob)."""
    actions = np.asarray(actions, dtype=int)
    idx = np.expand_dims(actions, -1)
    out = np.take_along_axis(logp.value, idx, axis=-1)[..., 0]

    def bw(g):
        full = np.zeros(logp.shape)
        np.put_along_axis(full, idx, np.expand_dims(g, -1), axis=-1)
        return (full,)

    return Tensor(out, (logp,), "take", bw)


def entropy(logp: Tensor) -> Tensor:
    """Categorical entropy -sum p log p from log-probabilities (last axis)."""
    lp = logp.value
    p = np.exp(lp)
    h = -(p * lp).sum(axis=-1)

    def bw(g):
        # dH/dlogp_k = -p_k (logp_k + 1)
        return (-np.expand_dims(g, -1) * p * (lp + 1.0),)

    return Tensor(h, (logp,), "entropy", bw)


# ------------------------------------------------------------------ backward


def _toposort(root: Tensor) -> List[Tensor]:
    order: List[Tensor] = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor, wrt: Sequence[Tensor]) -> List[np.ndarray]:
    """Gradients of scalar ``loss`` with respect to each tensor in ``wrt``."""
    if not isinstance(loss, Tensor) or loss.value.size != 1:
        raise ContractError("backward() needs a scalar Tensor loss")
    order = _toposort(loss)
    grads: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.value)}
    for node in reversed(order):
        if node.op not in SUPPORTED_OPS:
            raise ContractError(f"unsupported primitive {node.op!r} in loss graph")
        g = grads.get(id(node))
        if g is None or node._backward is None:
            continue
        for parent, pg in zip(node.parents, node._backward(g)):
            if pg is None or parent.op == "const":
                continue
            key = id(parent)
            grads[key] = grads[key] + pg if key in grads else pg
    out = []
    for t in wrt:
        g = grads.get(id(t))
        out.append(np.zeros_like(t.value) if g is None else g)
    return out
