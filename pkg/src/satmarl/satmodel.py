"""Per-satellite resource bookkeeping and action semantics.

Every function is state-in/state-out. Randomness comes from a caller-owned
``numpy.random.Generator``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Tuple

import numpy as np

from .errors import ConfigError

# Image sizes (GB) and downlink rates (GB per 60 s step) for the scenario labels.
IMAGE_SIZE_GB = {"S": 0.5, "L": 2.0}
BAUD_GB_PER_STEP = {"high": 0.25, "low": 0.03}


@dataclass(frozen=True)
class SatelliteParams:
    b_min_wh: float = 0.0
    b_max_wh: float = 400.0
    d_max_gb: float = 500.0
    omega_max_rpm: float = 6000.0
    base_draw_wh: float = 0.2
    capture_cost_wh: float = 1.0
    downlink_cost_wh: float = 1.5
    desat_cost_wh: float = 0.5
    charge_gain_wh: float = 4.0
    image_size_gb: float = IMAGE_SIZE_GB["S"]
    baud_gb_per_step: float = BAUD_GB_PER_STEP["high"]
    slew_rpm_min: float = 200.0
    slew_rpm_max: float = 600.0
    desat_rate_rpm: float = 1500.0
    disturbance_fail_prob: float = 0.0

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if not (math.isfinite(value) and value >= 0):
                raise ConfigError(f"{name} must be finite and nonnegative, got {value}")
        if not self.b_min_wh < self.b_max_wh:
            raise ConfigError("b_min_wh must be < b_max_wh")
        if self.slew_rpm_min > self.slew_rpm_max:
            raise ConfigError("slew_rpm_min must be <= slew_rpm_max")
        if self.disturbance_fail_prob > 1:
            raise ConfigError("disturbance_fail_prob must be in [0, 1]")
        if self.d_max_gb <= 0 or self.omega_max_rpm <= 0:
            raise ConfigError("d_max_gb and omega_max_rpm must be positive")


@dataclass(frozen=True)
class ResourceState:
    battery_wh: float
    storage_gb: float
    rw_rpm: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def is_finite(self) -> bool:
        return (
            math.isfinite(self.battery_wh)
            and math.isfinite(self.storage_gb)
            and bool(np.all(np.isfinite(self.rw_rpm)))
        )


def _clamp(x: float, lo: float, hi: float) -> float:
    return min(max(x, lo), hi)


def apply_charge(s: ResourceState, p: SatelliteParams, sunlit: bool) -> ResourceState:
    gain = p.charge_gain_wh if sunlit else 0.0
    return replace(s, battery_wh=_clamp(s.battery_wh - p.base_draw_wh + gain, 0.0, p.b_max_wh))


def slew_increment(rng: np.random.Generator, p: SatelliteParams) -> np.ndarray:
    mag = rng.uniform(p.slew_rpm_min, p.slew_rpm_max, size=3)
    sign = np.where(rng.random(3) < 0.5, -1.0, 1.0)
    return sign * mag


def apply_capture(
    s: ResourceState, p: SatelliteParams, target_visible: bool, rng: np.random.Generator
) -> Tuple[ResourceState, bool]:
    """Attempt one image capture.

    The slew always happens and the energy is always spent; the image only
    lands in storage when the target is visible, there is room for it and the
    attitude disturbance draw does not spoil it. Both random draws are made on
    every call so the RNG stream does not depend on the outcome.
    """
    battery = _clamp(s.battery_wh - p.base_draw_wh - p.capture_cost_wh, 0.0, p.b_max_wh)
    rw = s.rw_rpm + slew_increment(rng, p)
    undisturbed = rng.random() >= p.disturbance_fail_prob
    captured = bool(
        target_visible and s.storage_gb + p.image_size_gb <= p.d_max_gb and undisturbed
    )
    storage = s.storage_gb + p.image_size_gb if captured else s.storage_gb
    return ResourceState(battery, storage, rw), captured


def apply_downlink(s: ResourceState, p: SatelliteParams, gs_visible: bool) -> ResourceState:
    battery = _clamp(s.battery_wh - p.base_draw_wh - p.downlink_cost_wh, 0.0, p.b_max_wh)
    storage = max(0.0, s.storage_gb - p.baud_gb_per_step) if gs_visible else s.storage_gb
    return replace(s, battery_wh=battery, storage_gb=storage)


def apply_desaturate(s: ResourceState, p: SatelliteParams) -> ResourceState:
    rw = np.sign(s.rw_rpm) * np.maximum(np.abs(s.rw_rpm) - p.desat_rate_rpm, 0.0)
    battery = _clamp(s.battery_wh - p.base_draw_wh - p.desat_cost_wh, 0.0, p.b_max_wh)
    return replace(s, battery_wh=battery, rw_rpm=rw)


def check_failure(s: ResourceState, p: SatelliteParams) -> bool:
    # Wheel saturation is symmetric in sign.
    return bool(s.battery_wh <= 0.0 or np.any(np.abs(s.rw_rpm) >= p.omega_max_rpm))
