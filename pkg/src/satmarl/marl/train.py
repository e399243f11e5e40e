"""Training loops: single-satellite PPO, centralised PPO, IPPO, MAPPO, HAPPO.

All five share one loop (collect one window, estimate advantages, update) and
differ only in how the update step uses actors and critics.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from ..env import EnvConfig, SatelliteConstellationEnv
from ..errors import ConfigError, NumericError
from ..nn import adam_step, policy_forward
from .agents import AgentSet, make_agent_set
from .buffer import RolloutBuffer, collect_rollouts
from .config import TrainConfig
from .loss import LossBatch, loss_and_grads, normalize_advantages

log = logging.getLogger(__name__)


class TrainingAborted(NumericError):
    """Raised on a numeric failure; carries everything produced so far."""

    def __init__(self, message: str, agents: AgentSet, metrics: List[Dict]):
        super().__init__(message)
        self.agents = agents
        self.metrics = metrics


@dataclass
class TrainResult:
    agents: AgentSet
    metrics: List[Dict] = field(default_factory=list)


# ----------------------------------------------------------------- helpers


def batch_logp(agents: AgentSet, buf: RolloutBuffer, agent: int) -> np.ndarray:
    """Log-prob of the stored actions under the current actor, shape (T,).

    For the factored joint actor ``agent`` is ignored and the joint
    log-prob (sum over executed heads) is returned.
    """
    if agents.centralised:
        _, _, logp, _ = policy_forward(agents.actors[0], agents.actor_input(buf.obs, 0))
        T, H = buf.actions.shape
        per_head = logp[np.arange(T)[:, None], np.arange(H)[None, :], buf.actions]
        return (per_head * buf.active).sum(axis=1)
    _, _, logp, _ = policy_forward(agents.actors[agent], buf.obs[:, agent])
    return logp[np.arange(len(buf)), buf.actions[:, agent]]


def _minibatches(n: int, k: int, rng: np.random.Generator):
    perm = rng.permutation(n)
    return [mb for mb in np.array_split(perm, min(k, n)) if len(mb)]


def _apply(agents: AgentSet, kind: str, idx: int, grad: Optional[np.ndarray]) -> None:
    if grad is None:
        return
    nets = agents.actors if kind == "actor" else agents.critics
    opts = agents.actor_opt if kind == "actor" else agents.critic_opt
    net = nets[idx]
    flat, opts[idx] = adam_step(net.flat, grad, opts[idx])
    net.flat = flat


class _Diag:
    def __init__(self):
        self.sums: Dict[str, float] = {}
        self.counts: Dict[str, int] = {}

    def add(self, d: Dict[str, float]) -> None:
        for k, v in d.items():
            self.sums[k] = self.sums.get(k, 0.0) + v
            self.counts[k] = self.counts.get(k, 0) + 1

    def mean(self, key: str) -> float:
        return self.sums.get(key, 0.0) / self.counts[key] if self.counts.get(key) else 0.0


# ----------------------------------------------------------------- updates


def update_independent(agents: AgentSet, buf: RolloutBuffer, cfg: TrainConfig, rng, diag: _Diag) -> None:
    """PPO / IPPO: each agent trains its own actor and local critic."""
    T = len(buf)
    old = [batch_logp(agents, buf, i) for i in range(agents.n_agents)]
    adv = [normalize_advantages(buf.advantages[:, i], buf.active[:, i]) for i in range(agents.n_agents)]
    for _ in range(cfg.update_epochs):
        for mb in _minibatches(T, cfg.minibatches, rng):
            for i in range(agents.n_agents):
                w = buf.active[mb, i].astype(float)
                if not w.any():
                    continue
                batch = LossBatch(
                    actor_x=buf.obs[mb, i],
                    actions=buf.actions[mb, i],
                    old_logp=old[i][mb],
                    advantages=adv[i][mb],
                    policy_weight=w,
                    critic_x=buf.obs[mb, i],
                    returns=buf.returns[mb, i],
                    value_weight=w,
                )
                d, ga, gc = loss_and_grads(batch, agents.actors[i], agents.critics[i], cfg)
                _apply(agents, "actor", i, ga)
                _apply(agents, "critic", i, gc)
                diag.add(d)


def update_mappo(agents: AgentSet, buf: RolloutBuffer, cfg: TrainConfig, rng, diag: _Diag) -> None:
    """Per-agent actors share the advantage of one global-state critic."""
    T = len(buf)
    old = [batch_logp(agents, buf, i) for i in range(agents.n_agents)]
    adv = normalize_advantages(buf.advantages[:, 0])
    for _ in range(cfg.update_epochs):
        for mb in _minibatches(T, cfg.minibatches, rng):
            for i in range(agents.n_agents):
                w = buf.active[mb, i].astype(float)
                if not w.any():
                    continue
                batch = LossBatch(
                    actor_x=buf.obs[mb, i],
                    actions=buf.actions[mb, i],
                    old_logp=old[i][mb],
                    advantages=adv[mb],
                    policy_weight=w,
                )
                d, ga, _ = loss_and_grads(batch, agents.actors[i], None, cfg)
                _apply(agents, "actor", i, ga)
                diag.add(d)
            batch = LossBatch(critic_x=buf.states[mb], returns=buf.returns[mb, 0])
            d, _, gc = loss_and_grads(batch, None, agents.critics[0], cfg)
            _apply(agents, "critic", 0, gc)
            diag.add(d)


def update_central(agents: AgentSet, buf: RolloutBuffer, cfg: TrainConfig, rng, diag: _Diag) -> None:
    """One factored joint actor over all observations plus a global critic."""
    T = len(buf)
    old = batch_logp(agents, buf, 0)
    adv = normalize_advantages(buf.advantages[:, 0])
    x = agents.actor_input(buf.obs, 0)
    for _ in range(cfg.update_epochs):
        for mb in _minibatches(T, cfg.minibatches, rng):
            batch = LossBatch(
                actor_x=x[mb],
                actions=buf.actions[mb],
                old_logp=old[mb],
                advantages=adv[mb],
                head_mask=buf.active[mb],
                critic_x=buf.states[mb],
                returns=buf.returns[mb, 0],
            )
            d, ga, gc = loss_and_grads(batch, agents.actors[0], agents.critics[0], cfg)
            _apply(agents, "actor", 0, ga)
            _apply(agents, "critic", 0, gc)
            diag.add(d)


def update_happo(agents: AgentSet, buf: RolloutBuffer, cfg: TrainConfig, rng, diag: _Diag) -> List[np.ndarray]:
    """Sequential per-agent updates in a random order.

    Each agent's advantage is scaled by the product of the probability
    ratios of the agents updated before it in this iteration. Returns the
    compounding factor as seen by each agent, in update order.
    """
    T = len(buf)
    order = rng.permutation(agents.n_agents)
    factor = np.ones(T)
    seen: List[np.ndarray] = []
    for i in order:
        i = int(i)
        seen.append(factor.copy())
        mask = buf.active[:, i]
        old = batch_logp(agents, buf, i)
        adv = normalize_advantages(buf.advantages[:, i], mask)
        w_all = mask.astype(float)
        for _ in range(cfg.update_epochs):
            for mb in _minibatches(T, cfg.minibatches, rng):
                w = w_all[mb]
                if not w.any():
                    continue
                batch = LossBatch(
                    actor_x=buf.obs[mb, i],
                    actions=buf.actions[mb, i],
                    old_logp=old[mb],
                    advantages=factor[mb] * adv[mb],
                    policy_weight=w,
                    critic_x=buf.states[mb],
                    returns=buf.returns[mb, i],
                )
                d, ga, gc = loss_and_grads(batch, agents.actors[i], agents.critics[i], cfg)
                _apply(agents, "actor", i, ga)
                _apply(agents, "critic", i, gc)
                diag.add(d)
        if cfg.happo_compounding:
            new = batch_logp(agents, buf, i)
            factor = factor * np.where(mask, np.exp(new - old), 1.0)
    return seen


UPDATES = {
    "ppo": update_independent,
    "ippo": update_independent,
    "mappo": update_mappo,
    "central_ppo": update_central,
    "happo": update_happo,
}


# -------------------------------------------------------------------- loop


def train(algorithm: str, env_cfg: EnvConfig, cfg: TrainConfig, seed: int, progress=None) -> TrainResult:
    """Train one algorithm with one seed until ``cfg.total_env_steps`` joint steps."""
    n = env_cfg.n_sats
    if algorithm == "ppo" and n != 1:
        raise ConfigError("ppo needs exactly one satellite")
    if algorithm in ("central_ppo", "ippo", "mappo", "happo") and n < 1:
        raise ConfigError(f"{algorithm} needs at least one satellite")
    env = SatelliteConstellationEnv(env_cfg)
    agents = make_agent_set(algorithm, n, env.obs_dim, env.state_dim, env.action_space(), cfg, seed)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    n_steps = cfg.rollout_steps or env.horizon_steps
    update = UPDATES[algorithm]
    metrics: List[Dict] = []
    env_steps = 0
    iteration = 0
    while env_steps < cfg.total_env_steps:
        buf = collect_rollouts(env, agents, n_steps, rng)
        env_steps += len(buf)
        buf.compute_advantages(cfg.gamma, cfg.gae_lambda)
        diag = _Diag()
        try:
            update(agents, buf, cfg, rng, diag)
        except NumericError as exc:
            raise TrainingAborted(f"iteration {iteration}: {exc}", agents, metrics) from exc
        returns = np.array(buf.episode_returns)
        failures = np.array(buf.episode_failures, dtype=float)
        row = {
            "iteration": iteration,
            "env_steps": env_steps,
            "episodes": len(returns),
            "mean_return": float(returns.mean()),
            "capture_reward": float((returns + 100.0 * failures).mean()),
            "unique_captures": float(np.mean(buf.episode_captures)),
            "failures": float(failures.mean()),
            "entropy": buf.entropy,
            "clip_fraction": diag.mean("clip_fraction"),
            "approx_kl": diag.mean("approx_kl"),
            "value_loss": diag.mean("value_loss"),
        }
        metrics.append(row)
        if progress is not None:
            progress(row)
        log.debug("%s seed=%d it=%d return=%.3f", algorithm, seed, iteration, row["mean_return"])
        iteration += 1
    return TrainResult(agents, metrics)


def train_single_ppo(env_cfg: EnvConfig, cfg: TrainConfig, seed: int = 0) -> TrainResult:
    if env_cfg.n_sats != 1:
        raise ConfigError("single-satellite PPO needs exactly one satellite")
    return train("ppo", env_cfg, cfg, seed)


def train_centralised_ppo(env_cfg: EnvConfig, cfg: TrainConfig, seed: int = 0) -> TrainResult:
    return train("central_ppo", env_cfg, cfg, seed)


def train_ippo(env_cfg: EnvConfig, cfg: TrainConfig, seed: int = 0) -> TrainResult:
    return train("ippo", env_cfg, cfg, seed)


def train_mappo(env_cfg: EnvConfig, cfg: TrainConfig, seed: int = 0) -> TrainResult:
    return train("mappo", env_cfg, cfg, seed)


def train_happo(env_cfg: EnvConfig, cfg: TrainConfig, seed: int = 0) -> TrainResult:
    return train("happo", env_cfg, cfg, seed)
