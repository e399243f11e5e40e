"""Circular-orbit geometry on a spherical, uniformly rotating Earth.

Frames: the inertial frame (ECI) and the Earth-fixed frame (ECEF) share the
polar axis and coincide at t = 0. All lengths are km, all times seconds,
all angles radians.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from .errors import ConfigError

MU_EARTH = 398600.4418  # km^3 / s^2
R_EARTH = 6371.0  # km
OMEGA_EARTH = 7.2921159e-5  # rad / s
YEAR_S = 365.25 * 86400.0
OBLIQUITY = math.radians(23.44)


@dataclass(frozen=True)
class OrbitalElements:
    """Circular orbit (eccentricity fixed at zero)."""

    semi_major_axis_km: float
    inclination_rad: float
    raan_rad: float
    anomaly_at_epoch_rad: float

    def __post_init__(self):
        if not self.semi_major_axis_km > R_EARTH:
            raise ConfigError(f"semi-major axis {self.semi_major_axis_km} km is inside the Earth")
        for name in ("inclination_rad", "raan_rad", "anomaly_at_epoch_rad"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigError(f"{name} must be finite")

    @property
    def period_s(self) -> float:
        return orbital_period(self.semi_major_axis_km)


@dataclass(frozen=True)
class CartesianState:
    position_km: np.ndarray
    velocity_km_s: np.ndarray


@dataclass(frozen=True)
class GroundPoint:
    lat_rad: float
    lon_rad: float

    def __post_init__(self):
        if not -math.pi / 2 <= self.lat_rad <= math.pi / 2:
            raise ConfigError(f"latitude {self.lat_rad} out of [-pi/2, pi/2]")
        if not -math.pi <= self.lon_rad < math.pi:
            raise ConfigError(f"longitude {self.lon_rad} out of [-pi, pi)")

    @classmethod
    def from_degrees(cls, lat_deg: float, lon_deg: float) -> "GroundPoint":
        return cls(math.radians(lat_deg), math.radians(lon_deg))

    def unit_vector(self) -> np.ndarray:
        return geodetic_unit_vectors(np.array([self.lat_rad]), np.array([self.lon_rad]))[0]


@dataclass(frozen=True)
class ConstellationSpec:
    kind: str = "cluster"
    n_sats: int = 4
    n_planes: int = 1
    phasing_f: int = 0
    inclination_rad: float = math.radians(45.0)
    altitude_km: float = 500.0
    cluster_spacing_rad: float = math.radians(0.5)

    def __post_init__(self):
        if self.kind not in ("walker_delta", "cluster"):
            raise ConfigError(f"unknown constellation kind {self.kind!r}")
        if self.n_sats < 1:
            raise ConfigError("n_sats must be >= 1")
        if self.altitude_km <= 0:
            raise ConfigError("altitude must be positive")
        if self.kind == "walker_delta":
            if self.n_planes < 1 or self.n_sats % self.n_planes:
                raise ConfigError(
                    f"walker_delta needs n_sats ({self.n_sats}) divisible by n_planes ({self.n_planes})"
                )
            if self.phasing_f < 0:
                raise ConfigError("phasing_f must be >= 0")
        elif not self.cluster_spacing_rad > 0:
            raise ConfigError("cluster_spacing_rad must be > 0")

    @property
    def semi_major_axis_km(self) -> float:
        return R_EARTH + self.altitude_km


def orbital_period(a_km: float) -> float:
    """Kepler's third law for a circular orbit of radius ``a_km``."""
    if not a_km > 0:
        raise ValueError(f"semi-major axis must be positive, got {a_km}")
    return 2.0 * math.pi * math.sqrt(a_km**3 / MU_EARTH)


def _orbit_basis(el: OrbitalElements) -> Tuple[np.ndarray, np.ndarray]:
    # In-plane unit vectors: p points at the ascending node, q is 90 deg ahead.
    co, so = math.cos(el.raan_rad), math.sin(el.raan_rad)
    ci, si = math.cos(el.inclination_rad), math.sin(el.inclination_rad)
    p = np.array([co, so, 0.0])
    q = np.array([-so * ci, co * ci, si])
    return p, q


def propagate_circular(el: OrbitalElements, t: float) -> CartesianState:
    n = 2.0 * math.pi / el.period_s
    nu = el.anomaly_at_epoch_rad + n * t
    p, q = _orbit_basis(el)
    a = el.semi_major_axis_km
    pos = a * (math.cos(nu) * p + math.sin(nu) * q)
    vel = a * n * (-math.sin(nu) * p + math.cos(nu) * q)
    return CartesianState(pos, vel)


def positions_eci(el: OrbitalElements, times: np.ndarray) -> np.ndarray:
    """Vectorised propagation; returns an array of shape (len(times), 3)."""
    times = np.asarray(times, dtype=float)
    nu = el.anomaly_at_epoch_rad + (2.0 * math.pi / el.period_s) * times
    p, q = _orbit_basis(el)
    return el.semi_major_axis_km * (np.cos(nu)[:, None] * p + np.sin(nu)[:, None] * q)


def eci_to_ecef(pos_eci, t):
    """Rotate inertial vector(s) into the Earth-fixed frame at time(s) ``t``.

    ``pos_eci`` may be a single 3-vector or an (n, 3) array paired with a
    scalar or length-n array of times.
    """
    pos = np.asarray(pos_eci, dtype=float)
    theta = OMEGA_EARTH * np.asarray(t, dtype=float)
    c, s = np.cos(theta), np.sin(theta)
    out = np.empty_like(pos)
    out[..., 0] = c * pos[..., 0] + s * pos[..., 1]
    out[..., 1] = -s * pos[..., 0] + c * pos[..., 1]
    out[..., 2] = pos[..., 2]
    return out


def sun_direction(t):
    """Unit vector to the sun on a circular ecliptic, (1, 0, 0) at t = 0."""
    lam = 2.0 * math.pi * np.asarray(t, dtype=float) / YEAR_S
    out = np.stack(
        [np.cos(lam), np.sin(lam) * math.cos(OBLIQUITY), np.sin(lam) * math.sin(OBLIQUITY)],
        axis=-1,
    )
    return out


def in_eclipse(sat_pos_eci, sun_dir):
    """Cylindrical-umbra test; works on a single vector or row-wise on arrays."""
    pos = np.asarray(sat_pos_eci, dtype=float)
    sun = np.asarray(sun_dir, dtype=float)
    along = np.sum(pos * sun, axis=-1)
    perp = pos - along[..., None] * sun
    result = (along < 0.0) & (np.linalg.norm(perp, axis=-1) < R_EARTH)
    return bool(result) if result.ndim == 0 else result


def geodetic_unit_vectors(lat, lon) -> np.ndarray:
    lat = np.asarray(lat, dtype=float)
    lon = np.asarray(lon, dtype=float)
    cl = np.cos(lat)
    return np.stack([cl * np.cos(lon), cl * np.sin(lon), np.sin(lat)], axis=-1)


def elevation_angle(gp: GroundPoint, sat_ecef) -> float:
    """Elevation of ``sat_ecef`` above the local horizon at ``gp``."""
    up = gp.unit_vector()
    los = np.asarray(sat_ecef, dtype=float) - R_EARTH * up
    vertical = np.sum(los * up, axis=-1)
    horizontal = np.linalg.norm(los - vertical[..., None] * up, axis=-1)
    el = np.arctan2(vertical, horizontal)
    return float(el) if np.ndim(el) == 0 else el


def max_central_angle(radius_km: float, elev_min_rad: float) -> float:
    """Largest Earth-central angle between ground point and sub-satellite
    point at which a satellite at ``radius_km`` is at or above ``elev_min_rad``.
    """
    return math.acos(R_EARTH * math.cos(elev_min_rad) / radius_km) - elev_min_rad


def access_windows(
    el: OrbitalElements,
    points: np.ndarray,
    t_end: float,
    elev_min_rad: float,
    grid_s: float = 5.0,
    refine_iters: int = 12,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Visibility windows of one satellite over many ground points.

    ``points`` holds Earth-fixed unit vectors, shape (n, 3). Visibility is
    sampled on a ``grid_s`` grid over [0, t_end] and every crossing is refined
    by bisection on the exact geometry. Windows shorter than the grid spacing
    can be missed.

    Returns (point_index, start_s, end_s) arrays sorted by start time.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    cos_lim = math.cos(max_central_angle(el.semi_major_axis_km, elev_min_rad))
    n_grid = int(math.ceil(t_end / grid_s)) + 1
    times = np.linspace(0.0, (n_grid - 1) * grid_s, n_grid)
    sat_dir = eci_to_ecef(positions_eci(el, times), times) / el.semi_major_axis_km

    def margin(t, idx):
        u = eci_to_ecef(positions_eci(el, t), t) / el.semi_major_axis_km
        return np.sum(u * points[idx], axis=-1) - cos_lim

    idx_all, start_all, end_all = [], [], []
    chunk = max(1, 4_000_000 // n_grid)
    for lo in range(0, len(points), chunk):
        block = points[lo : lo + chunk]
        vis = (sat_dir @ block.T) >= cos_lim  # (n_grid, m)
        cols = np.flatnonzero(vis.any(axis=0))
        if len(cols) == 0:
            continue
        vis = vis[:, cols]
        padded = np.zeros((n_grid + 2, vis.shape[1]), dtype=np.int8)
        padded[1:-1] = vis
        edges = np.diff(padded, axis=0)
        rise_g, rise_p = np.nonzero(edges == 1)  # first visible grid index
        set_g, set_p = np.nonzero(edges == -1)  # first invisible grid index
        # Sort both by (point, grid) so rises and sets pair up.
        r_ord = np.lexsort((rise_g, rise_p))
        s_ord = np.lexsort((set_g, set_p))
        rise_g, rise_p = rise_g[r_ord], cols[rise_p[r_ord]] + lo
        set_g, set_p = set_g[s_ord], cols[set_p[s_ord]] + lo

        starts = _refine(margin, rise_g, rise_p, times, grid_s, rising=True, iters=refine_iters)
        ends = _refine(margin, set_g, set_p, times, grid_s, rising=False, iters=refine_iters)
        ends = np.minimum(ends, t_end)
        keep = starts <= t_end
        idx_all.append(rise_p[keep])
        start_all.append(starts[keep])
        end_all.append(ends[keep])

    if not idx_all:
        empty = np.zeros(0)
        return empty.astype(int), empty, empty
    idx = np.concatenate(idx_all)
    start = np.concatenate(start_all)
    end = np.concatenate(end_all)
    order = np.lexsort((idx, start))
    return idx[order], start[order], end[order]


def _refine(margin, g, p, times, grid_s, rising, iters):
    # Crossing lies in (times[g-1], times[g]]; g == 0 means visible from the start,
    # g == len(times) means still visible at the end of the grid.
    n = len(times)
    out = np.empty(len(g))
    at_lo = g == 0
    at_hi = g == n
    out[at_lo] = 0.0
    out[at_hi] = times[-1]
    mid = ~(at_lo | at_hi)
    if mid.any():
        lo = times[g[mid] - 1].copy()
        hi = times[g[mid]].copy()
        idx = p[mid]
        for _ in range(iters):
            m = 0.5 * (lo + hi)
            above = margin(m, idx) >= 0.0
            # rising: visible at hi; setting: visible at lo
            move_hi = above if rising else ~above
            hi = np.where(move_hi, m, hi)
            lo = np.where(move_hi, lo, m)
        out[mid] = hi if rising else lo
    return out


def make_walker_delta(spec: ConstellationSpec) -> List[OrbitalElements]:
    if spec.kind != "walker_delta":
        raise ConfigError(f"expected walker_delta spec, got {spec.kind!r}")
    per_plane = spec.n_sats // spec.n_planes
    out = []
    for plane in range(spec.n_planes):
        raan = 2.0 * math.pi * plane / spec.n_planes
        offset = 2.0 * math.pi * spec.phasing_f * plane / spec.n_sats
        for k in range(per_plane):
            anomaly = (offset + 2.0 * math.pi * k / per_plane) % (2.0 * math.pi)
            out.append(OrbitalElements(spec.semi_major_axis_km, spec.inclination_rad, raan, anomaly))
    return out


def make_cluster(spec: ConstellationSpec) -> List[OrbitalElements]:
    """Single-plane train; index 0 sits furthest ahead and leads every pass."""
    if spec.kind != "cluster":
        raise ConfigError(f"expected cluster spec, got {spec.kind!r}")
    return [
        OrbitalElements(
            spec.semi_major_axis_km,
            spec.inclination_rad,
            0.0,
            (spec.n_sats - 1 - i) * spec.cluster_spacing_rad,
        )
        for i in range(spec.n_sats)
    ]


def make_constellation(spec: ConstellationSpec) -> List[OrbitalElements]:
    if spec.kind == "walker_delta":
        return make_walker_delta(spec)
    return make_cluster(spec)


def angular_separation(u: np.ndarray, v: Sequence[float]) -> np.ndarray:
    return np.arccos(np.clip(np.sum(np.asarray(u) * np.asarray(v), axis=-1), -1.0, 1.0))
