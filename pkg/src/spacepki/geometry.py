"""Circular-orbit and ground-site kinematics, line of sight, visibility windows.

All positions are Earth-centred inertial (ECI) in km. At t = 0 the inertial
frame coincides with the Earth-fixed frame, so a ground site at longitude 0
sits on the +x axis. Every function here is pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np


@dataclass(frozen=True)
class PhysicalConstants:
    SPEED_OF_LIGHT_KM_S: float = 299_792.0
    EARTH_RADIUS_KM: float = 6_371.0
    MU_KM3_S2: float = 398_600.4418
    SIDEREAL_DAY_S: float = 86_164.1


CONSTANTS = PhysicalConstants()
SPEED_OF_LIGHT_KM_S = CONSTANTS.SPEED_OF_LIGHT_KM_S
EARTH_RADIUS_KM = CONSTANTS.EARTH_RADIUS_KM
MU_KM3_S2 = CONSTANTS.MU_KM3_S2
SIDEREAL_DAY_S = CONSTANTS.SIDEREAL_DAY_S

GEO_ALTITUDE_KM = 35_780.0

# Tolerance used to decide that a point lies on the Earth's surface.
_SURFACE_TOL_KM = 1e-3


@dataclass(frozen=True)
class LosConfig:
    """Line-of-sight parameters.

    ``grazing_margin_km`` applies to links between two space endpoints,
    ``min_elevation_deg`` to links with a ground endpoint.
    """

    grazing_margin_km: float = 100.0
    min_elevation_deg: float = 5.0


DEFAULT_LOS = LosConfig()


@dataclass(frozen=True)
class EciPosition:
    x_km: float
    y_km: float
    z_km: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x_km, self.y_km, self.z_km)):
            raise ValueError(f"non-finite position {self!r}")

    def as_array(self) -> np.ndarray:
        return np.array([self.x_km, self.y_km, self.z_km])

    @property
    def radius_km(self) -> float:
        return math.sqrt(self.x_km ** 2 + self.y_km ** 2 + self.z_km ** 2)

    @classmethod
    def from_array(cls, v) -> "EciPosition":
        return cls(float(v[0]), float(v[1]), float(v[2]))


@dataclass(frozen=True)
class CircularOrbit:
    """A circular two-body orbit.

    ``period_override_s`` pins the period independently of the Kepler value;
    :meth:`geostationary` uses it so GEO satellites track the sidereal day.
    """

    altitude_km: float
    inclination_deg: float = 0.0
    raan_deg: float = 0.0
    phase_deg: float = 0.0
    epoch_s: float = 0.0
    period_override_s: Optional[float] = None

    is_ground = False

    def __post_init__(self):
        if not self.altitude_km > 0:
            raise ValueError(f"altitude must be positive, got {self.altitude_km}")
        if not 0.0 <= self.inclination_deg <= 180.0:
            raise ValueError(f"inclination out of range: {self.inclination_deg}")
        if not 0.0 <= self.raan_deg < 360.0:
            raise ValueError(f"raan out of range: {self.raan_deg}")
        if not 0.0 <= self.phase_deg < 360.0:
            raise ValueError(f"phase out of range: {self.phase_deg}")
        if self.epoch_s < 0:
            raise ValueError(f"epoch must be non-negative: {self.epoch_s}")
        if self.period_override_s is not None and not self.period_override_s > 0:
            raise ValueError("period override must be positive")

    @classmethod
    def geostationary(cls, longitude_deg: float = 0.0) -> "CircularOrbit":
        """Equatorial orbit at GEO altitude hovering over ``longitude_deg``."""
        return cls(
            altitude_km=GEO_ALTITUDE_KM,
            phase_deg=longitude_deg % 360.0,
            period_override_s=SIDEREAL_DAY_S,
        )

    @property
    def radius_km(self) -> float:
        return EARTH_RADIUS_KM + self.altitude_km

    @property
    def period_s(self) -> float:
        if self.period_override_s is not None:
            return self.period_override_s
        return orbital_period(self.altitude_km)

    def position(self, t: float) -> EciPosition:
        return satellite_position(self, t)

    def positions(self, ts) -> np.ndarray:
        return satellite_positions(self, ts)


@dataclass(frozen=True)
class GroundSite:
    latitude_deg: float
    longitude_deg: float

    is_ground = True

    def __post_init__(self):
        if not -90.0 <= self.latitude_deg <= 90.0:
            raise ValueError(f"latitude out of range: {self.latitude_deg}")
        if not -180.0 <= self.longitude_deg < 180.0:
            raise ValueError(f"longitude out of range: {self.longitude_deg}")

    def position(self, t: float) -> EciPosition:
        return ground_position(self, t)

    def positions(self, ts) -> np.ndarray:
        return ground_positions(self, ts)


NodeGeometry = Union[CircularOrbit, GroundSite]


@dataclass(frozen=True)
class VisibilityWindow:
    start_s: float
    end_s: float

    def __post_init__(self):
        if not self.start_s < self.end_s:
            raise ValueError(f"empty window [{self.start_s}, {self.end_s}]")

    @property
    def duration_s(self) -> float:
        return self.end_s - self.start_s


def orbital_period(altitude_km: float) -> float:
    """Kepler period in seconds of a circular orbit at ``altitude_km``."""
    if not altitude_km > 0:
        raise ValueError(f"altitude must be positive, got {altitude_km}")
    a = EARTH_RADIUS_KM + altitude_km
    return 2.0 * math.pi * math.sqrt(a ** 3 / MU_KM3_S2)


def satellite_positions(orbit: CircularOrbit, ts) -> np.ndarray:
    """Vectorised propagation; returns an array of shape ``(len(ts), 3)``."""
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    r = orbit.radius_km
    u = np.radians(orbit.phase_deg) + 2.0 * np.pi * (ts - orbit.epoch_s) / orbit.period_s
    inc = math.radians(orbit.inclination_deg)
    raan = math.radians(orbit.raan_deg)
    cu, su = np.cos(u), np.sin(u)
    co, so = math.cos(raan), math.sin(raan)
    ci, si = math.cos(inc), math.sin(inc)
    x = r * (co * cu - so * su * ci)
    y = r * (so * cu + co * su * ci)
    z = r * (su * si)
    return np.stack([x, y, z], axis=-1)


def satellite_position(orbit: CircularOrbit, t: float) -> EciPosition:
    if t < 0:
        raise ValueError(f"time must be non-negative, got {t}")
    return EciPosition.from_array(satellite_positions(orbit, [t])[0])


def ground_positions(site: GroundSite, ts) -> np.ndarray:
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    lat = math.radians(site.latitude_deg)
    theta = np.radians(site.longitude_deg) + 2.0 * np.pi * ts / SIDEREAL_DAY_S
    x = EARTH_RADIUS_KM * math.cos(lat) * np.cos(theta)
    y = EARTH_RADIUS_KM * math.cos(lat) * np.sin(theta)
    z = np.full_like(ts, EARTH_RADIUS_KM * math.sin(lat))
    return np.stack([x, y, z], axis=-1)


def ground_position(site: GroundSite, t: float) -> EciPosition:
    if t < 0:
        raise ValueError(f"time must be non-negative, got {t}")
    return EciPosition.from_array(ground_positions(site, [t])[0])


def distance_km(a: EciPosition, b: EciPosition) -> float:
    return math.sqrt(
        (a.x_km - b.x_km) ** 2 + (a.y_km - b.y_km) ** 2 + (a.z_km - b.z_km) ** 2
    )


def one_way_latency_s(distance_km: float) -> float:
    if distance_km < 0:
        raise ValueError(f"distance must be non-negative, got {distance_km}")
    return distance_km / SPEED_OF_LIGHT_KM_S


def _los_mask(pa: np.ndarray, pb: np.ndarray, los: LosConfig) -> np.ndarray:
    """Line of sight for arrays of endpoint pairs, shape ``(n, 3)`` each."""
    ra = np.linalg.norm(pa, axis=-1)
    rb = np.linalg.norm(pb, axis=-1)
    if np.any(ra < EARTH_RADIUS_KM - _SURFACE_TOL_KM) or np.any(
        rb < EARTH_RADIUS_KM - _SURFACE_TOL_KM
    ):
        raise ValueError("endpoint lies inside the Earth")
    ga = np.abs(ra - EARTH_RADIUS_KM) <= _SURFACE_TOL_KM
    gb = np.abs(rb - EARTH_RADIUS_KM) <= _SURFACE_TOL_KM

    d = pb - pa
    dd = np.einsum("ij,ij->i", d, d)
    # space-space: closest approach of the segment to the Earth's centre
    with np.errstate(invalid="ignore", divide="ignore"):
        s = np.where(dd > 0, -np.einsum("ij,ij->i", pa, d) / dd, 0.0)
    s = np.clip(s, 0.0, 1.0)
    closest = pa + s[:, None] * d
    clear = np.linalg.norm(closest, axis=-1) >= EARTH_RADIUS_KM + los.grazing_margin_km

    # ground endpoints: elevation of the far end above the local horizon
    sin_min = math.sin(math.radians(los.min_elevation_deg))
    dist = np.sqrt(dd)
    with np.errstate(invalid="ignore", divide="ignore"):
        el_a = np.einsum("ij,ij->i", d, pa) / (dist * ra)
        el_b = np.einsum("ij,ij->i", -d, pb) / (dist * rb)
    ok_a = np.where(dist > 0, el_a >= sin_min, True)
    ok_b = np.where(dist > 0, el_b >= sin_min, True)

    both_ground = ga & gb
    one_ground = ga ^ gb
    return np.where(
        both_ground,
        True,  # terrestrial network; always connected
        np.where(one_ground, np.where(ga, ok_a, ok_b), clear),
    )


def has_line_of_sight(a: EciPosition, b: EciPosition, los: LosConfig = DEFAULT_LOS) -> bool:
    """True when ``a`` and ``b`` can communicate directly.

    A point on the Earth's surface is treated as a ground endpoint and needs
    the other end at or above ``los.min_elevation_deg``. Two ground
    endpoints are considered connected through the terrestrial network.
    """
    return bool(_los_mask(a.as_array()[None, :], b.as_array()[None, :], los)[0])


def los_series(a: NodeGeometry, b: NodeGeometry, ts, los: LosConfig = DEFAULT_LOS) -> np.ndarray:
    return _los_mask(a.positions(ts), b.positions(ts), los)


def _refine(a, b, lo: float, hi: float, los: LosConfig, tol: float) -> tuple[float, float]:
    """Bisect a LOS transition between ``lo`` and ``hi`` down to ``tol``.

    Returns the final bracket; ``lo`` keeps the state observed at the
    original ``lo`` and ``hi`` the opposite state.
    """
    lo_val = bool(los_series(a, b, [lo], los)[0])
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if bool(los_series(a, b, [mid], los)[0]) == lo_val:
            lo = mid
        else:
            hi = mid
    return lo, hi


def _scan(a, b, start: float, end: float, step: float, los: LosConfig):
    ts = np.arange(start, end, step)
    if ts.size == 0 or ts[-1] < end:
        ts = np.append(ts, end)
    return ts, los_series(a, b, ts, los)


def visibility_windows(
    a: NodeGeometry,
    b: NodeGeometry,
    start_s: float,
    end_s: float,
    los: LosConfig = DEFAULT_LOS,
    step_s: float = 10.0,
    tol_s: float = 0.1,
) -> list[VisibilityWindow]:
    """All windows inside ``[start_s, end_s]``, clipped to that interval.

    Boundaries are the innermost bisection points, so both ends of a
    reported window have line of sight.
    """
    ts, vis = _scan(a, b, start_s, end_s, step_s, los)
    windows = []
    n = len(ts)
    i = 0
    while i < n:
        if not vis[i]:
            i += 1
            continue
        if i == 0:
            w_start = float(ts[0])
        else:
            w_start = _refine(a, b, ts[i - 1], ts[i], los, tol_s)[1]
        j = i
        while j < n and vis[j]:
            j += 1
        if j == n:
            w_end = float(ts[-1])
        else:
            w_end = _refine(a, b, ts[j - 1], ts[j], los, tol_s)[0]
        if w_end > w_start:
            windows.append(VisibilityWindow(float(w_start), float(w_end)))
        i = j
    return windows


def next_visibility_window(
    a: NodeGeometry,
    b: NodeGeometry,
    from_s: float,
    horizon_s: float,
    los: LosConfig = DEFAULT_LOS,
    step_s: float = 10.0,
    tol_s: float = 0.1,
    chunk_s: float = 6 * 3600.0,
) -> Optional[VisibilityWindow]:
    """Earliest window in ``[from_s, from_s + horizon_s]``, or None.

    Scans in chunks so the common case (window soon) stays cheap.
    """
    if not horizon_s > 0:
        raise ValueError("horizon must be positive")
    end = from_s + horizon_s
    cursor = from_s
    found_start = None
    while cursor < end:
        chunk_end = min(end, cursor + chunk_s)
        ws = visibility_windows(a, b, cursor, chunk_end, los, step_s, tol_s)
        if found_start is None:
            if not ws:
                cursor = chunk_end
                continue
            found_start = ws[0].start_s
            if ws[0].end_s < chunk_end:
                return VisibilityWindow(found_start, ws[0].end_s)
        else:
            if not ws or ws[0].start_s > cursor:
                return VisibilityWindow(found_start, cursor)
            if ws[0].end_s < chunk_end:
                return VisibilityWindow(found_start, ws[0].end_s)
        cursor = chunk_end
    if found_start is not None and end > found_start:
        return VisibilityWindow(found_start, end)
    return None


def node_distance_km(a: NodeGeometry, b: NodeGeometry, t: float) -> float:
    return distance_km(a.position(t), b.position(t))


def node_los(a: NodeGeometry, b: NodeGeometry, t: float, los: LosConfig = DEFAULT_LOS) -> bool:
    return bool(los_series(a, b, [t], los)[0])


def elevation_deg(site: GroundSite, target: EciPosition, t: float) -> float:
    g = ground_position(site, t).as_array()
    d = target.as_array() - g
    n = np.linalg.norm(d)
    if n == 0:
        return 90.0
    return math.degrees(math.asin(float(np.dot(d, g) / (n * np.linalg.norm(g)))))
