"""Actor/critic bundles for each training algorithm.

=============  ================================  ==============================
algorithm      actors                            critics
=============  ================================  ==============================
ppo            1, local observation              1, local observation
central_ppo    1 over all observations,          1, global state
               one categorical head per agent
ippo           one per agent, local              one per agent, local
mappo          one per agent, local              1 shared, global state
happo          one per agent, local              one per agent, global state
=============  ================================  ==============================
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from ..errors import ConfigError
from ..nn import AdamState, MlpSpec, ParamVector, init_params, policy_forward, value_forward
from .config import ALGORITHMS, TrainConfig


def sample_categorical(probs: np.ndarray, u: float) -> int:
    """Inverse-CDF draw so one uniform number maps to one action."""
    c = np.cumsum(probs)
    return int(min(np.searchsorted(c, u * c[-1], side="right"), len(probs) - 1))


@dataclass
class AgentSet:
    algorithm: str
    n_agents: int
    actors: List[ParamVector]
    critics: List[ParamVector]
    actor_opt: List[AdamState]
    critic_opt: List[AdamState]

    @property
    def centralised(self) -> bool:
        return self.algorithm == "central_ppo"

    @property
    def critic_global(self) -> bool:
        return self.algorithm in ("central_ppo", "mappo", "happo")

    @property
    def n_critics(self) -> int:
        return len(self.critics)

    def critic_of(self, agent: int) -> int:
        return 0 if len(self.critics) == 1 else agent

    def act(self, obs: Sequence[np.ndarray], active: np.ndarray, rng: np.random.Generator, greedy: bool = False):
        """Pick one action per agent.

        Returns (actions, log_probs, entropies), each of length n_agents.
        One uniform number is drawn per agent on every call, active or not,
        so the random stream is independent of which agents have failed.
        """
        u = rng.random(self.n_agents)
        if self.centralised:
            _, probs, logp, ent = policy_forward(self.actors[0], np.concatenate(obs))
        else:
            rows = [policy_forward(self.actors[i], obs[i]) for i in range(self.n_agents)]
            probs = np.stack([r[1] for r in rows])
            logp = np.stack([r[2] for r in rows])
            ent = np.array([r[3] for r in rows], dtype=float)
        if greedy:
            actions = np.argmax(probs, axis=-1)
        else:
            actions = np.array([sample_categorical(probs[i], u[i]) for i in range(self.n_agents)])
        chosen = logp[np.arange(self.n_agents), actions]
        return actions, chosen, np.asarray(ent, dtype=float)

    def actor_input(self, obs_batch: np.ndarray, agent: int) -> np.ndarray:
        """Actor features for a (T, N, obs_dim) batch."""
        if self.centralised:
            return obs_batch.reshape(obs_batch.shape[0], -1)
        return obs_batch[:, agent]

    def critic_input(self, obs_batch: np.ndarray, states: np.ndarray, critic: int) -> np.ndarray:
        return states if self.critic_global else obs_batch[:, critic]

    def values(self, obs: Sequence[np.ndarray], state: np.ndarray) -> np.ndarray:
        if self.critic_global:
            return np.array([value_forward(c, state) for c in self.critics])
        return np.array([value_forward(self.critics[c], obs[c]) for c in range(self.n_critics)])


def make_agent_set(algorithm: str, n_agents: int, obs_dim: int, state_dim: int, n_actions: int,
                   cfg: TrainConfig, seed: int) -> AgentSet:
    if algorithm not in ALGORITHMS:
        raise ConfigError(f"unknown algorithm {algorithm!r}; choose from {ALGORITHMS}")
    if algorithm == "ppo" and n_agents != 1:
        raise ConfigError(f"ppo is single-satellite; got {n_agents} satellites")
    hidden = tuple(cfg.hidden)
    ss = np.random.SeedSequence(seed)
    actor_seeds = ss.spawn(n_agents)
    critic_seeds = ss.spawn(n_agents)

    if algorithm == "central_ppo":
        actor_specs = [MlpSpec(n_agents * obs_dim, "categorical", n_actions, hidden, n_heads=n_agents)]
    else:
        actor_specs = [MlpSpec(obs_dim, "categorical", n_actions, hidden) for _ in range(n_agents)]
    if algorithm in ("central_ppo", "mappo"):
        critic_specs = [MlpSpec(state_dim, "scalar", 1, hidden)]
    elif algorithm == "happo":
        critic_specs = [MlpSpec(state_dim, "scalar", 1, hidden) for _ in range(n_agents)]
    else:
        critic_specs = [MlpSpec(obs_dim, "scalar", 1, hidden) for _ in range(n_agents)]

    actors = [init_params(s, actor_seeds[i]) for i, s in enumerate(actor_specs)]
    critics = [init_params(s, critic_seeds[i]) for i, s in enumerate(critic_specs)]
    return AgentSet(
        algorithm=algorithm,
        n_agents=n_agents,
        actors=actors,
        critics=critics,
        actor_opt=[AdamState.zeros(len(a), cfg.lr) for a in actors],
        critic_opt=[AdamState.zeros(len(c), cfg.lr) for c in critics],
    )
