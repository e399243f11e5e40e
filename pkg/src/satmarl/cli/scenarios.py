"""Built-in scenario catalog."""

from __future__ import annotations

import math
from dataclasses import replace
from typing import Callable, Dict, Tuple

from ..astro import ConstellationSpec
from ..env import EnvConfig
from ..errors import ConfigError
from ..satmodel import BAUD_GB_PER_STEP, IMAGE_SIZE_GB, SatelliteParams

_SINGLE = ConstellationSpec(kind="cluster", n_sats=1)
_CLUSTER4 = ConstellationSpec(kind="cluster", n_sats=4)
_WALKER4 = ConstellationSpec(kind="walker_delta", n_sats=4, n_planes=2, phasing_f=1, inclination_rad=math.radians(45.0))

_RANDOM = dict(randomize_rw=True, randomize_battery=True, randomize_storage=True, disturbance=True)
_LIMITED = SatelliteParams(
    b_max_wh=50.0, d_max_gb=5.0, baud_gb_per_step=BAUD_GB_PER_STEP["low"], image_size_gb=IMAGE_SIZE_GB["L"]
)


def _single(**kw) -> EnvConfig:
    return EnvConfig(constellation=_SINGLE, **kw)


def _cluster(**kw) -> EnvConfig:
    return EnvConfig(constellation=_CLUSTER4, **kw)


SCENARIOS: Dict[str, Tuple[str, Callable[[], EnvConfig]]] = {
    "single_default": ("1 satellite, B=400 Wh, D=500 GB", lambda: _single()),
    "single_limited_battery": (
        "1 satellite, B=50 Wh",
        lambda: _single(sat_params=(SatelliteParams(b_max_wh=50.0),)),
    ),
    "single_limited_storage": (
        "1 satellite, D=5 GB",
        lambda: _single(sat_params=(SatelliteParams(d_max_gb=5.0),)),
    ),
    "single_random": (
        "1 satellite, randomized wheels/battery/storage plus attitude disturbance",
        lambda: _single(**_RANDOM),
    ),
    "cluster4_default": ("4-satellite cluster, B=400 Wh, D=500 GB", lambda: _cluster()),
    "cluster4_limited": (
        "4-satellite cluster, B=50 Wh, D=5 GB, low baud rate, large images",
        lambda: _cluster(sat_params=(_LIMITED,)),
    ),
    "cluster4_random": (
        "4-satellite cluster, randomized wheels/battery/storage plus attitude disturbance",
        lambda: _cluster(**_RANDOM),
    ),
    "walker4_default": (
        "4-satellite Walker-delta 4/2/1 at 45 deg, B=400 Wh, D=500 GB",
        lambda: EnvConfig(constellation=_WALKER4),
    ),
    "cluster4_hetero_storage": (
        "4-satellite cluster, D=(5, 10, 250, 500) GB",
        lambda: _cluster(sat_params=tuple(SatelliteParams(d_max_gb=d) for d in (5.0, 10.0, 250.0, 500.0))),
    ),
}


def scenario_env(name: str) -> EnvConfig:
    try:
        return SCENARIOS[name][1]()
    except KeyError:
        raise ConfigError(f"unknown scenario {name!r}; run 'satmarl scenarios' for the list") from None


def reduced(env: EnvConfig, n_targets: int = 200, horizon_orbits: float = 1.0) -> EnvConfig:
    """Desk-scale variant: fewer targets and a shorter episode."""
    return replace(env, n_targets=n_targets, horizon_orbits=horizon_orbits)
