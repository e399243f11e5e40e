"""Clipped-surrogate actor-critic loss."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from ..errors import NumericError
from ..nn import ParamVector, autodiff as ad
from ..nn.mlp import graph_policy, graph_value
from .config import TrainConfig


@dataclass
class LossBatch:
    """Minibatch for :func:`ppo_loss`.

    Policy fields may be None when only the critic is trained and vice versa.
    ``actions`` is (B,) for a single-head actor or (B, H) for a factored joint
    actor, in which case ``head_mask`` (B, H) selects the heads whose actions
    were executed (their log-probs and entropies are summed).
    """

    actor_x: Optional[np.ndarray] = None
    actions: Optional[np.ndarray] = None
    old_logp: Optional[np.ndarray] = None
    advantages: Optional[np.ndarray] = None
    policy_weight: Optional[np.ndarray] = None
    head_mask: Optional[np.ndarray] = None
    critic_x: Optional[np.ndarray] = None
    returns: Optional[np.ndarray] = None
    value_weight: Optional[np.ndarray] = None


def normalize_advantages(adv: np.ndarray, mask: Optional[np.ndarray] = None) -> np.ndarray:
    sel = adv if mask is None else adv[mask]
    if sel.size == 0:
        return np.zeros_like(adv)
    std = max(float(sel.std()), 1e-8)
    return (adv - float(sel.mean())) / std


def ppo_loss(
    batch: LossBatch,
    actor: Optional[ParamVector],
    critic: Optional[ParamVector],
    cfg: TrainConfig,
) -> Tuple[ad.Tensor, Dict[str, float], Tuple[Optional[ad.Tensor], Optional[ad.Tensor]]]:
    """total = -clipped surrogate + c1 * value MSE - c2 * entropy.

    Returns the scalar loss graph, diagnostics and the (actor, critic) leaf
    tensors to differentiate against. Advantages are used as given; callers
    normalise them beforehand.
    """
    terms = []
    diag: Dict[str, float] = {}
    actor_leaf = critic_leaf = None

    if actor is not None:
        actor_leaf = ad.Tensor(actor.flat)
        logp_all = graph_policy(actor_leaf, actor.spec, batch.actor_x)
        if actor.spec.n_heads > 1:
            mask = batch.head_mask.astype(float)
            lp = ad.total(ad.mul(ad.take(logp_all, batch.actions), mask), axis=1)
            ent = ad.total(ad.mul(ad.entropy(logp_all), mask), axis=1)
        else:
            lp = ad.take(logp_all, batch.actions)
            ent = ad.entropy(logp_all)
        log_ratio = ad.sub(lp, batch.old_logp)
        ratio = ad.exp(log_ratio)
        adv = batch.advantages
        surr = ad.minimum(
            ad.mul(ratio, adv),
            ad.mul(ad.clip(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps), adv),
        )
        w = batch.policy_weight
        l_clip = ad.mean(surr, w)
        l_ent = ad.mean(ent, w)
        terms += [ad.neg(l_clip), ad.scale(l_ent, -cfg.c2)]

        r = ratio.value
        lr_ = log_ratio.value
        wt = np.ones_like(r) if w is None else np.asarray(w, dtype=float)
        denom = max(wt.sum(), 1e-12)
        diag.update(
            surrogate=float(l_clip.value),
            entropy=float(l_ent.value),
            clip_fraction=float((wt * (np.abs(r - 1.0) > cfg.clip_eps)).sum() / denom),
            approx_kl=float((wt * ((r - 1.0) - lr_)).sum() / denom),
            mean_ratio=float((wt * r).sum() / denom),
        )

    if critic is not None:
        critic_leaf = ad.Tensor(critic.flat)
        v = graph_value(critic_leaf, critic.spec, batch.critic_x)
        l_v = ad.mean(ad.square(ad.sub(v, batch.returns)), batch.value_weight)
        terms.append(ad.scale(l_v, cfg.c1))
        diag["value_loss"] = float(l_v.value)

    loss = terms[0]
    for term in terms[1:]:
        loss = ad.add(loss, term)
    if not np.isfinite(loss.value).all():
        raise NumericError(f"non-finite loss {float(loss.value)}")
    diag["total"] = float(loss.value)
    return loss, diag, (actor_leaf, critic_leaf)


def loss_and_grads(batch: LossBatch, actor, critic, cfg):
    """Convenience wrapper: (diagnostics, actor_grad or None, critic_grad or None)."""
    loss, diag, leaves = ppo_loss(batch, actor, critic, cfg)
    wrt = [leaf for leaf in leaves if leaf is not None]
    grads = iter(ad.backward(loss, wrt))
    actor_grad = next(grads) if leaves[0] is not None else None
    critic_grad = next(grads) if leaves[1] is not None else None
    for g in (actor_grad, critic_grad):
        if g is not None and not np.all(np.isfinite(g)):
            raise NumericError("non-finite gradient")
    return diag, actor_grad, critic_grad
