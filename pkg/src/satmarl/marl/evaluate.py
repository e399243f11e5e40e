"""Greedy evaluation with per-agent action and capture accounting."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..env import FAILURE_PENALTY, EnvConfig, SatelliteConstellationEnv, action_label
from .agents import AgentSet


class UniquenessViolation(AssertionError):
    """Capture reward exceeded what unique captures can possibly earn."""


@dataclass
class EvalResult:
    returns: List[float]
    capture_rewards: List[float]
    unique_captures: List[int]
    failures: List[int]
    # action_counts[agent][action_index], active_steps[agent]
    action_counts: np.ndarray
    active_steps: np.ndarray
    # per-agent count of first captures (scored) summed over episodes
    agent_unique_captures: np.ndarray
    # (agent, target_id) -> number of images stored
    capture_hist: Counter = field(default_factory=Counter)
    trace: Optional[List[Tuple[int, np.ndarray, int]]] = None

    @property
    def mean_return(self) -> float:
        return float(np.mean(self.returns))

    def summary(self) -> Dict:
        return {
            "episodes": len(self.returns),
            "mean_return": float(np.mean(self.returns)),
            "std_return": float(np.std(self.returns)),
            "mean_capture_reward": float(np.mean(self.capture_rewards)),
            "mean_unique_captures": float(np.mean(self.unique_captures)),
            "total_failures": int(np.sum(self.failures)),
            "agent_unique_captures": self.agent_unique_captures.tolist(),
            "active_steps": self.active_steps.tolist(),
            "action_counts": {
                f"agent{i}": {action_label(a): int(c) for a, c in enumerate(row)}
                for i, row in enumerate(self.action_counts)
            },
        }


def audit_episode(env: SatelliteConstellationEnv) -> float:
    """Recount the capture reward from the scored log and check uniqueness."""
    ids = [j for _, _, j, _ in env.scored_log]
    if len(ids) != len(set(ids)):
        raise UniquenessViolation("a target was scored more than once")
    recount = float(sum(env.priorities[j] for j in ids))
    n_failed = int((~env.active).sum())
    accumulated = env.episode_return + FAILURE_PENALTY * n_failed
    if abs(recount - accumulated) > 1e-9:
        raise UniquenessViolation(f"event-log recount {recount} != accumulated {accumulated}")
    if recount > env.total_priority + 1e-9:
        raise UniquenessViolation(f"capture reward {recount} exceeds total priority {env.total_priority}")
    return recount


def evaluate(agents: Optional[AgentSet], env_cfg: EnvConfig, n_episodes: int, seed: int,
             greedy: bool = True, record_trace: bool = False) -> EvalResult:
    """Roll out ``n_episodes`` episodes. ``agents=None`` runs a uniform random policy."""
    env = SatelliteConstellationEnv(env_cfg)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 2]))
    N, A = env.n_agents, env.action_space()
    counts = np.zeros((N, A), dtype=int)
    active_steps = np.zeros(N, dtype=int)
    agent_unique = np.zeros(N, dtype=int)
    hist: Counter = Counter()
    trace = [] if record_trace else None
    returns, cap_rewards, uniques, failures = [], [], [], []
    for _ in range(n_episodes):
        obs = env.reset(int(rng.integers(2**31)))
        done = False
        while not done:
            active = env.active.copy()
            if agents is None:
                actions = rng.integers(A, size=N)
            else:
                actions, _, _ = agents.act(obs, active, rng, greedy=greedy)
            joint = [int(a) if active[i] else None for i, a in enumerate(actions)]
            for i, a in enumerate(joint):
                if a is None:
                    continue
                counts[i, a] += 1
                active_steps[i] += 1
                if trace is not None:
                    trace.append((i, obs[i].copy(), a))
            res = env.step(joint)
            for i, ev in enumerate(res.events):
                if ev is None:
                    continue
                if ev.outcome == "scored":
                    agent_unique[i] += 1
                if ev.stored:
                    hist[(i, ev.target_id)] += 1
            obs = res.observations
            done = res.done
        cap_rewards.append(audit_episode(env))
        returns.append(env.episode_return)
        uniques.append(env.n_captured)
        failures.append(int((~env.active).sum()))
    return EvalResult(returns, cap_rewards, uniques, failures, counts, active_steps, agent_unique, hist, trace)
