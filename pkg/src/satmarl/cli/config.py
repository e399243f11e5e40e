"""Experiment configuration files (TOML).

A config names a built-in scenario and may override any environment or
training field::

    [experiment]
    scenario = "cluster4_limited"
    algorithm = "mappo"
    seeds = [0, 1, 2]
    output_dir = "runs/c4_mappo"

    [env]
    n_targets = 200
    horizon_orbits = 1.0

    [env.constellation]
    cluster_spacing_rad = 0.01

    [[env.satellite]]          # one table shared by all, or one per satellite
    b_max_wh = 50.0

    [train]
    lr = 0.001

Omitted fields keep the scenario's values. :func:`dump_config` writes every
field explicitly, so a dumped file reloads to an equal config.
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, Tuple

import tomli
import tomli_w

from ..astro import ConstellationSpec, GroundPoint
from ..env import EnvConfig
from ..errors import ConfigError
from ..marl import ALGORITHMS, TrainConfig
from ..satmodel import SatelliteParams
from .scenarios import scenario_env


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str
    algorithm: str
    env: EnvConfig
    train: TrainConfig = field(default_factory=TrainConfig)
    output_dir: str = "runs/default"

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}; choose from {', '.join(ALGORITHMS)}")
        if self.algorithm == "ppo" and self.env.n_sats != 1:
            raise ConfigError(f"algorithm 'ppo' needs exactly one satellite, scenario has {self.env.n_sats}")
        if not self.train.seeds:
            raise ConfigError("seeds must not be empty")

    @property
    def seeds(self) -> Tuple[int, ...]:
        return self.train.seeds


_ENV_SCALARS = {
    f.name
    for f in fields(EnvConfig)
    if f.name not in ("constellation", "sat_params", "ground_stations")
}
_TRAIN_FIELDS = {f.name for f in fields(TrainConfig)} - {"seeds"}


def _coerce(cls, name: str, value: Any):
    """Cast a TOML value to the type of the dataclass field's default."""
    default = next(f for f in fields(cls) if f.name == name)
    ref = default.default if default.default is not dataclasses.MISSING else None
    if isinstance(ref, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{cls.__name__}.{name} must be true or false")
        return value
    if isinstance(ref, int) or (ref is None and name == "rollout_steps"):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{cls.__name__}.{name} must be an integer")
        return value
    if isinstance(ref, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{cls.__name__}.{name} must be a number")
        return float(value)
    if isinstance(ref, tuple):
        if not isinstance(value, list):
            raise ConfigError(f"{cls.__name__}.{name} must be an array")
        return tuple(value)
    if isinstance(ref, str) and not isinstance(value, str):
        raise ConfigError(f"{cls.__name__}.{name} must be a string")
    return value


def _apply(cls, base, table: Dict[str, Any], allowed, where: str):
    unknown = set(table) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in [{where}]: {', '.join(sorted(unknown))}")
    try:
        return replace(base, **{k: _coerce(cls, k, v) for k, v in table.items()})
    except TypeError as exc:
        raise ConfigError(f"[{where}]: {exc}") from exc


def _env_from_table(base: EnvConfig, table: Dict[str, Any]) -> EnvConfig:
    table = dict(table)
    const_tab = table.pop("constellation", {})
    sat_tabs = table.pop("satellite", None)
    gs = table.pop("ground_stations", None)

    constellation = _apply(
        ConstellationSpec, base.constellation, const_tab,
        {f.name for f in fields(ConstellationSpec)}, "env.constellation",
    )
    n = constellation.n_sats
    sat_params = base.sat_params
    if sat_tabs is not None:
        if not isinstance(sat_tabs, list) or len(sat_tabs) not in (1, n):
            raise ConfigError(f"[[env.satellite]] needs 1 or {n} tables")
        bases = sat_params if len(sat_params) == len(sat_tabs) else (sat_params[0],) * len(sat_tabs)
        allowed = {f.name for f in fields(SatelliteParams)}
        sat_params = tuple(
            _apply(SatelliteParams, b, t, allowed, "env.satellite") for b, t in zip(bases, sat_tabs)
        )
    elif len(sat_params) not in (1, n):
        sat_params = (sat_params[0],)
    stations = base.ground_stations
    if gs is not None:
        try:
            stations = tuple(GroundPoint(float(lat), float(lon)) for lat, lon in gs)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"env.ground_stations must be [[lat_rad, lon_rad], ...]: {exc}") from exc
    env = _apply(EnvConfig, base, table, _ENV_SCALARS, "env")
    return replace(env, constellation=constellation, sat_params=sat_params, ground_stations=stations)


def parse_config(text: str) -> ExperimentConfig:
    try:
        doc = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML: {exc}") from exc
    unknown = set(doc) - {"experiment", "env", "train"}
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(sorted(unknown))}")
    exp = dict(doc.get("experiment", {}))
    for key in ("scenario", "algorithm"):
        if key not in exp:
            raise ConfigError(f"[experiment] is missing {key!r}")
    extra = set(exp) - {"scenario", "algorithm", "seeds", "output_dir"}
    if extra:
        raise ConfigError(f"unknown key(s) in [experiment]: {', '.join(sorted(extra))}")
    env = _env_from_table(scenario_env(exp["scenario"]), doc.get("env", {}))
    train = _apply(TrainConfig, TrainConfig(), doc.get("train", {}), _TRAIN_FIELDS, "train")
    seeds = exp.get("seeds", [0])
    if not isinstance(seeds, list) or not all(isinstance(s, int) and not isinstance(s, bool) for s in seeds):
        raise ConfigError("[experiment] seeds must be an array of integers")
    train = replace(train, seeds=tuple(seeds))
    return ExperimentConfig(
        scenario=exp["scenario"],
        algorithm=exp["algorithm"],
        env=env,
        train=train,
        output_dir=str(exp.get("output_dir", f"runs/{exp['scenario']}_{exp['algorithm']}")),
    )


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    return parse_config(text)


def config_hash(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _dataclass_table(obj, skip=()) -> Dict[str, Any]:
    out = {}
    for f in fields(obj):
        if f.name in skip:
            continue
        v = getattr(obj, f.name)
        if v is None:
            continue
        out[f.name] = list(v) if isinstance(v, tuple) else v
    return out


def dump_config(cfg: ExperimentConfig) -> str:
    env = cfg.env
    env_tab = _dataclass_table(env, skip=("constellation", "sat_params", "ground_stations"))
    env_tab["ground_stations"] = [[g.lat_rad, g.lon_rad] for g in env.ground_stations]
    env_tab["constellation"] = _dataclass_table(env.constellation)
    env_tab["satellite"] = [_dataclass_table(p) for p in env.sat_params]
    doc = {
        "experiment": {
            "scenario": cfg.scenario,
            "algorithm": cfg.algorithm,
            "seeds": list(cfg.seeds),
            "output_dir": cfg.output_dir,
        },
        "env": env_tab,
        "train": _dataclass_table(cfg.train, skip=("seeds",)),
    }
    return tomli_w.dumps(doc)
