"""Cooperative multi-satellite Earth-observation environment.

Every satellite is an agent that sees only its own observation vector and
picks one of ``3 + k_slots`` discrete actions per step. All agents receive the
same team reward: the priority of every constellation-wide first capture,
minus 100 for every satellite that fails during the step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import astro
from .astro import ConstellationSpec, GroundPoint
from .errors import ConfigError, ContractError
from .satmodel import (
    ResourceState,
    SatelliteParams,
    apply_capture,
    apply_charge,
    apply_desaturate,
    apply_downlink,
    check_failure,
)

CHARGE, DOWNLINK, DESATURATE = 0, 1, 2
N_FIXED_ACTIONS = 3
ACTION_NAMES = ("charge", "downlink", "desaturate")
FAILURE_PENALTY = 100.0
DISTURBANCE_FAIL_PROB = 0.05
RW_INIT_RPM = 3000.0
OBS_BASE_LEN = 9

DEFAULT_GROUND_STATIONS = (
    GroundPoint.from_degrees(78.2, 15.4),
    GroundPoint.from_degrees(-35.3, 149.1),
    GroundPoint.from_degrees(-33.4, -70.6),
)


@dataclass(frozen=True)
class Action:
    """One of Charge, Downlink, Desaturate or Capture(slot)."""

    kind: str
    slot: Optional[int] = None

    def to_index(self) -> int:
        if self.kind == "capture":
            return N_FIXED_ACTIONS + int(self.slot)
        return ACTION_NAMES.index(self.kind)

    @classmethod
    def from_index(cls, index: int, k_slots: int) -> "Action":
        if not 0 <= index < N_FIXED_ACTIONS + k_slots:
            raise ContractError(f"action index {index} out of range for k_slots={k_slots}")
        if index < N_FIXED_ACTIONS:
            return cls(ACTION_NAMES[index])
        return cls("capture", index - N_FIXED_ACTIONS)


def action_label(index: int) -> str:
    if index < N_FIXED_ACTIONS:
        return ACTION_NAMES[index]
    return f"capture{index - N_FIXED_ACTIONS}"


@dataclass(frozen=True)
class EnvConfig:
    constellation: ConstellationSpec = field(default_factory=ConstellationSpec)
    n_targets: int = 2000
    horizon_orbits: float = 2.0
    dt_s: float = 60.0
    k_slots: int = 3
    # One entry per satellite, or a single entry shared by all.
    sat_params: Tuple[SatelliteParams, ...] = (SatelliteParams(),)
    ground_stations: Tuple[GroundPoint, ...] = DEFAULT_GROUND_STATIONS
    target_elev_min_rad: float = math.radians(60.0)
    gs_elev_min_rad: float = math.radians(10.0)
    randomize_rw: bool = False
    randomize_battery: bool = False
    randomize_storage: bool = False
    disturbance: bool = False
    master_seed: int = 0
    window_grid_s: float = 5.0

    def __post_init__(self):
        if self.n_targets < 1:
            raise ConfigError("n_targets must be >= 1")
        if self.k_slots < 1:
            raise ConfigError("k_slots must be >= 1")
        if not self.dt_s > 0:
            raise ConfigError("dt_s must be > 0")
        if not self.horizon_orbits > 0:
            raise ConfigError("horizon_orbits must be > 0")
        if len(self.sat_params) not in (1, self.constellation.n_sats):
            raise ConfigError(
                f"sat_params has {len(self.sat_params)} entries for {self.constellation.n_sats} satellites"
            )
        if not self.ground_stations:
            raise ConfigError("at least one ground station is required")

    @property
    def n_sats(self) -> int:
        return self.constellation.n_sats

    def params_for(self, i: int) -> SatelliteParams:
        return self.sat_params[0] if len(self.sat_params) == 1 else self.sat_params[i]

    @property
    def obs_dim(self) -> int:
        return OBS_BASE_LEN + 3 * self.k_slots

    @property
    def state_dim(self) -> int:
        return self.n_sats * self.obs_dim + 1

    @property
    def n_actions(self) -> int:
        return N_FIXED_ACTIONS + self.k_slots


@dataclass
class Target:
    id: int
    point: GroundPoint
    priority: float
    captured_by: Optional[Tuple[int, int]] = None  # (sat index, step index)


@dataclass(frozen=True)
class AgentEvent:
    action: int
    outcome: str  # charge | downlink | desaturate | scored | duplicate | wasted
    target_id: Optional[int] = None
    reward: float = 0.0
    failed: bool = False
    stored: bool = False  # an image was written to storage


@dataclass
class StepResult:
    observations: List[np.ndarray]
    team_reward: float
    events: List[Optional[AgentEvent]]
    done: bool
    active: np.ndarray


def generate_targets(n: int, rng: np.random.Generator) -> List[Target]:
    """Area-uniform ground targets with uniform priorities."""
    if n < 1:
        raise ConfigError("need at least one target")
    lon = rng.uniform(-math.pi, math.pi, size=n)
    lat = np.arcsin(rng.uniform(-1.0, 1.0, size=n))
    prio = rng.uniform(0.0, 1.0, size=n)
    return [Target(j, GroundPoint(float(lat[j]), float(lon[j])), float(prio[j])) for j in range(n)]


@dataclass
class _Windows:
    target: np.ndarray
    start: np.ndarray
    end: np.ndarray
    max_len: float


def _merge_intervals(start: np.ndarray, end: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    if len(start) == 0:
        return start, end
    order = np.argsort(start, kind="stable")
    merged_s, merged_e = [start[order[0]]], [end[order[0]]]
    for s, e in zip(start[order[1:]], end[order[1:]]):
        if s <= merged_e[-1]:
            merged_e[-1] = max(merged_e[-1], e)
        else:
            merged_s.append(s)
            merged_e.append(e)
    return np.array(merged_s), np.array(merged_e)


class SatelliteConstellationEnv:
    """Dec-POMDP over a constellation of resource-limited imaging satellites."""

    def __init__(self, cfg: EnvConfig):
        self.cfg = cfg
        self.elements = astro.make_constellation(cfg.constellation)
        self.period_s = astro.orbital_period(cfg.constellation.semi_major_axis_km)
        self.horizon_steps = int(math.ceil(cfg.horizon_orbits * self.period_s / cfg.dt_s))
        self.horizon_s = self.horizon_steps * cfg.dt_s
        self.lookahead_s = self.period_s
        self.n_agents = cfg.n_sats
        self.k_slots = cfg.k_slots
        self.obs_dim = cfg.obs_dim
        self.state_dim = cfg.state_dim
        self._gs_units = np.array([gs.unit_vector() for gs in cfg.ground_stations])
        self._is_reset = False

    def action_space(self) -> int:
        return self.cfg.n_actions

    # ------------------------------------------------------------------ reset

    def reset(self, episode_seed: int) -> List[np.ndarray]:
        cfg = self.cfg
        seq = np.random.SeedSequence([cfg.master_seed & 0xFFFFFFFF, episode_seed & 0xFFFFFFFF])
        target_ss, init_ss, dyn_ss = seq.spawn(3)
        self.targets = generate_targets(cfg.n_targets, np.random.default_rng(target_ss))
        self.priorities = np.array([t.priority for t in self.targets])
        self._target_units = np.array(
            astro.geodetic_unit_vectors(
                [t.point.lat_rad for t in self.targets], [t.point.lon_rad for t in self.targets]
            )
        )
        self._rng = np.random.default_rng(dyn_ss)

        fail_prob = DISTURBANCE_FAIL_PROB if cfg.disturbance else 0.0
        self.params = [
            replace(cfg.params_for(i), disturbance_fail_prob=fail_prob) for i in range(self.n_agents)
        ]
        init_rng = np.random.default_rng(init_ss)
        self.resources = []
        for p in self.params:
            # Draw every range unconditionally so toggling one flag leaves the others' draws alone.
            bat = init_rng.uniform(0.40, 0.80)
            sto = init_rng.uniform(0.20, 0.80)
            rw = init_rng.uniform(-RW_INIT_RPM, RW_INIT_RPM, size=3)
            self.resources.append(
                ResourceState(
                    battery_wh=(bat if cfg.randomize_battery else 0.5) * p.b_max_wh,
                    storage_gb=(sto if cfg.randomize_storage else 0.0) * p.d_max_gb,
                    rw_rpm=rw if cfg.randomize_rw else np.zeros(3),
                )
            )

        t_end = self.horizon_s + self.lookahead_s
        self._windows: List[_Windows] = []
        self._gs_windows: List[Tuple[np.ndarray, np.ndarray]] = []
        for el in self.elements:
            idx, start, end = astro.access_windows(
                el, self._target_units, t_end, cfg.target_elev_min_rad, grid_s=cfg.window_grid_s
            )
            max_len = float(np.max(end - start)) if len(start) else 0.0
            self._windows.append(_Windows(idx, start, end, max_len))
            _, gs_start, gs_end = astro.access_windows(
                el, self._gs_units, t_end, cfg.gs_elev_min_rad, grid_s=cfg.window_grid_s
            )
            self._gs_windows.append(_merge_intervals(gs_start, gs_end))

        step_times = np.arange(self.horizon_steps + 1) * cfg.dt_s
        sun = astro.sun_direction(step_times)
        self._eclipse = np.array(
            [astro.in_eclipse(astro.positions_eci(el, step_times), sun) for el in self.elements]
        )

        self.step_index = 0
        self.active = np.ones(self.n_agents, dtype=bool)
        self.own_captures: List[set] = [set() for _ in range(self.n_agents)]
        self.scored_log: List[Tuple[int, int, int, float]] = []  # (step, sat, target, reward)
        self.n_captured = 0
        self.episode_return = 0.0
        self.done = False
        self._is_reset = True
        self._refresh_slots()
        return [self.build_observation(i) for i in range(self.n_agents)]

    # ------------------------------------------------------------ geometry

    @property
    def t(self) -> float:
        return self.step_index * self.cfg.dt_s

    def upcoming_targets(self, sat_index: int, t: Optional[float] = None, k_slots: Optional[int] = None):
        """Next ``k`` imaging opportunities for one satellite, earliest start first.

        Windows already in progress at ``t`` are included. Targets this
        satellite has captured are skipped; captures by other satellites are
        not known to it. Returns a list of (target_id, start, end) with
        target_id = -1 for padded slots.
        """
        self._require_reset()
        t = self.t if t is None else t
        k = self.k_slots if k_slots is None else k_slots
        w = self._windows[sat_index]
        own = self.own_captures[sat_index]
        limit = t + self.lookahead_s
        slots: List[Tuple[int, float, float]] = []
        seen = set()
        i = int(np.searchsorted(w.start, t - w.max_len, side="left"))
        n = len(w.start)
        while i < n and len(slots) < k:
            s = w.start[i]
            if s > limit:
                break
            j = int(w.target[i])
            if w.end[i] >= t and j not in own and j not in seen:
                slots.append((j, float(s), float(w.end[i])))
                seen.add(j)
            i += 1
        while len(slots) < k:
            slots.append((-1, math.inf, math.inf))
        return slots

    def _refresh_slots(self):
        self._slots = [self.upcoming_targets(i) for i in range(self.n_agents)]

    def _gs_overlap(self, sat_index: int, t0: float, t1: float) -> bool:
        s, e = self._gs_windows[sat_index]
        if len(s) == 0:
            return False
        i = int(np.searchsorted(s, t1, side="right")) - 1
        return i >= 0 and e[i] >= t0

    def _next_gs_start(self, sat_index: int, t: float) -> float:
        s, _ = self._gs_windows[sat_index]
        i = int(np.searchsorted(s, t, side="right"))
        return float(s[i]) if i < len(s) else math.inf

    # ------------------------------------------------------- observations

    def build_observation(self, sat_index: int) -> np.ndarray:
        self._require_reset()
        p = self.params[sat_index]
        r = self.resources[sat_index]
        t = self.t
        H = self.horizon_s
        obs = np.empty(self.obs_dim)
        obs[0] = r.battery_wh / p.b_max_wh
        obs[1] = r.storage_gb / p.d_max_gb
        obs[2:5] = r.rw_rpm / p.omega_max_rpm
        obs[5] = float(self._eclipse[sat_index, self.step_index])
        obs[6] = t / H
        gs_now = self._gs_overlap(sat_index, t, t)
        obs[7] = float(gs_now)
        obs[8] = 0.0 if gs_now else min((self._next_gs_start(sat_index, t) - t) / H, 1.0)
        for k, (j, start, end) in enumerate(self._slots[sat_index]):
            base = OBS_BASE_LEN + 3 * k
            if j < 0:
                obs[base : base + 3] = (0.0, 1.0, 0.0)
            else:
                obs[base] = self.priorities[j]
                obs[base + 1] = max(start - t, 0.0) / H
                obs[base + 2] = (end - start) / H
        return np.clip(obs, -1.0, 1.0)

    def global_state(self) -> np.ndarray:
        self._require_reset()
        parts = [self.build_observation(i) for i in range(self.n_agents)]
        parts.append(np.array([self.n_captured / len(self.targets)]))
        return np.concatenate(parts)

    # ----------------------------------------------------------------- step

    def step(self, joint_action: Sequence[Optional[int]]) -> StepResult:
        self._require_reset()
        if self.done:
            raise ContractError("step() called after the episode finished; call reset()")
        if len(joint_action) != self.n_agents:
            raise ContractError(f"expected {self.n_agents} actions, got {len(joint_action)}")
        for i, a in enumerate(joint_action):
            if self.active[i] and a is None:
                raise ContractError(f"active agent {i} has no action")
            if not self.active[i] and a is not None:
                raise ContractError(f"agent {i} is inactive and cannot act")
            if a is not None and not 0 <= int(a) < self.cfg.n_actions:
                raise ContractError(f"action {a} out of range for agent {i}")

        t0 = self.t
        self.step_index += 1
        t1 = self.t
        sunlit_new = ~self._eclipse[:, self.step_index]

        events: List[Optional[AgentEvent]] = [None] * self.n_agents
        captures: Dict[int, List[int]] = {}
        for i, a in enumerate(joint_action):
            if a is None:
                continue
            a = int(a)
            p, r = self.params[i], self.resources[i]
            if a == CHARGE:
                self.resources[i] = apply_charge(r, p, bool(sunlit_new[i]))
                events[i] = AgentEvent(a, "charge")
            elif a == DOWNLINK:
                self.resources[i] = apply_downlink(r, p, self._gs_overlap(i, t0, t1))
                events[i] = AgentEvent(a, "downlink")
            elif a == DESATURATE:
                self.resources[i] = apply_desaturate(r, p)
                events[i] = AgentEvent(a, "desaturate")
            else:
                j, start, end = self._slots[i][a - N_FIXED_ACTIONS]
                visible = j >= 0 and start <= t1 and end >= t0
                self.resources[i], ok = apply_capture(r, p, visible, self._rng)
                if ok:
                    self.own_captures[i].add(j)
                    captures.setdefault(j, []).append(i)
                else:
                    events[i] = AgentEvent(a, "wasted", j if j >= 0 else None)

        team_reward = 0.0
        for j in sorted(captures):
            sats = captures[j]
            tgt = self.targets[j]
            if tgt.captured_by is None:
                winner = min(sats)
                tgt.captured_by = (winner, self.step_index)
                rho = tgt.priority
                team_reward += rho
                self.n_captured += 1
                self.scored_log.append((self.step_index, winner, j, rho))
                for i in sats:
                    a = int(joint_action[i])
                    if i == winner:
                        events[i] = AgentEvent(a, "scored", j, rho, stored=True)
                    else:
                        events[i] = AgentEvent(a, "wasted", j, stored=True)
            else:
                for i in sats:
                    events[i] = AgentEvent(int(joint_action[i]), "duplicate", j, stored=True)

        for i in range(self.n_agents):
            if self.active[i] and check_failure(self.resources[i], self.params[i]):
                self.active[i] = False
                team_reward -= FAILURE_PENALTY
                events[i] = replace(events[i], failed=True)

        self.episode_return += team_reward
        self.done = self.step_index >= self.horizon_steps or not self.active.any()
        self._refresh_slots()
        obs = [self.build_observation(i) for i in range(self.n_agents)]
        return StepResult(obs, team_reward, events, self.done, self.active.copy())

    def _require_reset(self):
        if not self._is_reset:
            raise ContractError("environment used before reset()")

    @property
    def total_priority(self) -> float:
        return float(self.priorities.sum())
