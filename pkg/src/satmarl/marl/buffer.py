"""Rollout storage, advantage estimation and trajectory collection."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from ..env import SatelliteConstellationEnv
from ..errors import ContractError


def compute_gae(rewards, values, dones, gamma: float, lam: float):
    """Generalised advantage estimates and value targets.

    ``values`` carries one extra trailing entry, the bootstrap value of the
    state after the last step (0 if that step ended an episode). ``dones[t]``
    marks that step ``t`` ended an episode, which cuts both the bootstrap and
    the advantage recursion.
    """
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    dones = np.asarray(dones, dtype=float)
    T = len(rewards)
    if len(dones) != T or len(values) != T + 1:
        raise ContractError(
            f"need len(values) == len(rewards) + 1 == len(dones) + 1, got {len(values)}, {T}, {len(dones)}"
        )
    adv = np.zeros(T)
    last = 0.0
    for t in range(T - 1, -1, -1):
        nonterminal = 1.0 - dones[t]
        delta = rewards[t] + gamma * values[t + 1] * nonterminal - values[t]
        last = delta + gamma * lam * nonterminal * last
        adv[t] = last
    return adv, adv + values[:-1]


@dataclass
class RolloutBuffer:
    """One collection window; arrays indexed [step] or [step, agent]."""

    obs: np.ndarray  # (T, N, obs_dim)
    states: np.ndarray  # (T, state_dim)
    actions: np.ndarray  # (T, N) int
    logp: np.ndarray  # (T, N) behaviour log-prob of each agent's action
    rewards: np.ndarray  # (T,) team reward
    values: np.ndarray  # (T + 1, C) one column per critic, bootstrap row last
    dones: np.ndarray  # (T,)
    active: np.ndarray  # (T, N) agent acted at this step
    episode_returns: List[float] = field(default_factory=list)
    episode_captures: List[int] = field(default_factory=list)
    episode_failures: List[int] = field(default_factory=list)
    entropy: float = 0.0
    advantages: Optional[np.ndarray] = None  # (T, C)
    returns: Optional[np.ndarray] = None  # (T, C)

    def __len__(self):
        return len(self.rewards)

    def compute_advantages(self, gamma: float, lam: float) -> None:
        adv = np.zeros((len(self), self.values.shape[1]))
        ret = np.zeros_like(adv)
        for c in range(self.values.shape[1]):
            adv[:, c], ret[:, c] = compute_gae(self.rewards, self.values[:, c], self.dones, gamma, lam)
        self.advantages, self.returns = adv, ret


def collect_rollouts(env: SatelliteConstellationEnv, agents, n_steps: int, rng: np.random.Generator) -> RolloutBuffer:
    """Run the current policies for exactly ``n_steps`` joint steps.

    The environment is reset at the start of the window and again whenever an
    episode ends. Episode seeds come from ``rng``. Episode statistics cover
    the episodes that finished inside the window, or the truncated last one
    if none did.
    """
    N = env.n_agents
    obs_buf = np.zeros((n_steps, N, env.obs_dim))
    state_buf = np.zeros((n_steps, env.state_dim))
    act_buf = np.zeros((n_steps, N), dtype=int)
    logp_buf = np.zeros((n_steps, N))
    rew_buf = np.zeros(n_steps)
    val_buf = np.zeros((n_steps + 1, agents.n_critics))
    done_buf = np.zeros(n_steps)
    active_buf = np.zeros((n_steps, N), dtype=bool)
    ent_sum, ent_n = 0.0, 0
    returns, captures, failures = [], [], []

    obs = env.reset(int(rng.integers(2**31)))
    state = env.global_state()
    for t in range(n_steps):
        active = env.active.copy()
        actions, logp, ent = agents.act(obs, active, rng)
        obs_buf[t] = obs
        state_buf[t] = state
        act_buf[t] = actions
        logp_buf[t] = logp
        active_buf[t] = active
        val_buf[t] = agents.values(obs, state)
        ent_sum += float(ent[active].sum())
        ent_n += int(active.sum())
        res = env.step([int(a) if active[i] else None for i, a in enumerate(actions)])
        rew_buf[t] = res.team_reward
        done_buf[t] = float(res.done)
        if res.done:
            returns.append(env.episode_return)
            captures.append(env.n_captured)
            failures.append(int((~env.active).sum()))
            if t + 1 < n_steps:
                obs = env.reset(int(rng.integers(2**31)))
                state = env.global_state()
        else:
            obs = res.observations
            state = env.global_state()
    val_buf[n_steps] = 0.0 if done_buf[-1] else agents.values(obs, state)
    if not returns:
        # Window shorter than an episode: report the truncated one so metrics stay defined.
        returns.append(env.episode_return)
        captures.append(env.n_captured)
        failures.append(int((~env.active).sum()))
    return RolloutBuffer(
        obs=obs_buf,
        states=state_buf,
        actions=act_buf,
        logp=logp_buf,
        rewards=rew_buf,
        values=val_buf,
        dones=done_buf,
        active=active_buf,
        episode_returns=returns,
        episode_captures=captures,
        episode_failures=failures,
        entropy=ent_sum / max(ent_n, 1),
    )
