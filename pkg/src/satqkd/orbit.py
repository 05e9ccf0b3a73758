"""Circular LEO propagation, ground-station geometry, pass search, Doppler.

The model is deliberately small: spherical Earth, circular orbits, optional
J2 secular regression of the ascending node (enough to hold a Sun-synchronous
plane over a year-long sweep).  Positions are expressed in an Earth-fixed
frame; ``SatState.velocity_ecef_km_s`` is the *inertial* velocity resolved in
Earth-fixed axes, so its magnitude stays sqrt(mu/a).  Range rates relative to
a ground site subtract the site's rotation velocity explicitly.

Conventions
-----------
- Elevation is positive above the horizon, azimuth clockwise from north.
- Radial velocity is positive when the satellite recedes from the site.
- Times are timezone-naive ``datetime`` instants interpreted as UTC and
  converted internally to uniform seconds (leap seconds ignored).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from typing import NamedTuple

import numpy as np

from .constants import (
    J2_EARTH,
    MU_EARTH_KM3_S2,
    OMEGA_EARTH_RAD_S,
    R_EARTH_KM,
    SIDEREAL_YEAR_S,
    SPEED_OF_LIGHT_KM_S,
)

_J2000 = datetime(2000, 1, 1, 12, 0, 0)

# Earth rotation angle at the J2000 epoch, radians
_ERA_J2000_RAD = 2.0 * math.pi * 0.7790572732640


def era_rad(t: datetime) -> float:
    """Earth rotation angle at time t, radians in [0, 2*pi)."""
    dt_s = (t - _J2000).total_seconds()
    return (_ERA_J2000_RAD + OMEGA_EARTH_RAD_S * dt_s) % (2.0 * math.pi)


@dataclass(frozen=True)
class OrbitSpec:
    """Circular orbit: altitude, plane orientation and an along-track epoch.

    ``arg_lat_epoch_deg`` is the argument of latitude (angle from the
    ascending node along the orbit) at ``epoch``.
    """

    altitude_km: float
    inclination_deg: float
    raan_deg: float = 0.0
    arg_lat_epoch_deg: float = 0.0
    epoch: datetime = _J2000
    j2_enabled: bool = True

    def __post_init__(self):
        if not 200.0 <= self.altitude_km <= 2000.0:
            raise ValueError(
                f"altitude {self.altitude_km} km outside the 200-2000 km LEO band"
            )
        if not 0.0 <= self.inclination_deg <= 180.0:
            raise ValueError(f"inclination {self.inclination_deg} out of [0, 180]")

    @property
    def semi_major_axis_km(self) -> float:
        return R_EARTH_KM + self.altitude_km

    @property
    def mean_motion_rad_s(self) -> float:
        a = self.semi_major_axis_km
        return math.sqrt(MU_EARTH_KM3_S2 / a**3)

    @property
    def period_s(self) -> float:
        return 2.0 * math.pi / self.mean_motion_rad_s

    @property
    def raan_rate_rad_s(self) -> float:
        """J2 secular rate of the ascending node (0 when J2 is disabled)."""
        if not self.j2_enabled:
            return 0.0
        a = self.semi_major_axis_km
        n = self.mean_motion_rad_s
        return -1.5 * n * J2_EARTH * (R_EARTH_KM / a) ** 2 * math.cos(
            math.radians(self.inclination_deg)
        )


@dataclass(frozen=True)
class SatState:
    """Satellite state at one instant.

    ``velocity_ecef_km_s`` is the inertial velocity resolved in Earth-fixed
    axes (|v| = sqrt(mu/a)); subtract ``omega x r_site`` for site-relative
    rates, which :func:`topocentric` does internally.
    """

    time: datetime
    position_ecef_km: np.ndarray
    velocity_ecef_km_s: np.ndarray


@dataclass(frozen=True)
class GroundSite:
    """Ground station on the spherical Earth."""

    name: str
    latitude_deg: float
    longitude_deg: float
    altitude_m: float = 0.0

    def __post_init__(self):
        if abs(self.latitude_deg) > 90.0:
            raise ValueError(f"latitude {self.latitude_deg} out of [-90, 90]")
        lon = (self.longitude_deg + 180.0) % 360.0 - 180.0
        if lon == -180.0:
            lon = 180.0
        object.__setattr__(self, "longitude_deg", lon)

    @property
    def ecef_km(self) -> np.ndarray:
        lat = math.radians(self.latitude_deg)
        lon = math.radians(self.longitude_deg)
        r = R_EARTH_KM + self.altitude_m / 1000.0
        return np.array(
            [r * math.cos(lat) * math.cos(lon), r * math.cos(lat) * math.sin(lon), r * math.sin(lat)]
        )

    def enu_axes(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Unit east/north/up vectors of the site in Earth-fixed axes."""
        lat = math.radians(self.latitude_deg)
        lon = math.radians(self.longitude_deg)
        east = np.array([-math.sin(lon), math.cos(lon), 0.0])
        north = np.array(
            [-math.sin(lat) * math.cos(lon), -math.sin(lat) * math.sin(lon), math.cos(lat)]
        )
        up = np.array(
            [math.cos(lat) * math.cos(lon), math.cos(lat) * math.sin(lon), math.sin(lat)]
        )
        return east, north, up


class PassSample(NamedTuple):
    time: datetime
    elevation_deg: float
    azimuth_deg: float
    slant_range_km: float
    radial_velocity_km_s: float


@dataclass
class PassWindow:
    """One satellite pass above a minimum elevation over a ground site."""

    rise: datetime
    set: datetime
    max_elevation_deg: float
    samples: list[PassSample] = field(default_factory=list)

    @property
    def duration_s(self) -> float:
        return (self.set - self.rise).total_seconds()


def _propagate_arrays(
    orbit: OrbitSpec, dt_s: np.ndarray, omega_earth: float = OMEGA_EARTH_RAD_S
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized propagation to epoch-relative times ``dt_s`` (seconds).

    Returns (position, velocity) with shape (n, 3); velocity is inertial,
    resolved in Earth-fixed axes.  ``omega_earth`` exists so analyses can
    freeze Earth rotation (0.0) when checking frame-independent properties.
    """
    a = orbit.semi_major_axis_km
    n = orbit.mean_motion_rad_s
    v = math.sqrt(MU_EARTH_KM3_S2 / a)
    inc = math.radians(orbit.inclination_deg)

    u = math.radians(orbit.arg_lat_epoch_deg) + n * dt_s
    raan = math.radians(orbit.raan_deg) + orbit.raan_rate_rad_s * dt_s

    cos_u, sin_u = np.cos(u), np.sin(u)
    cos_o, sin_o = np.cos(raan), np.sin(raan)
    cos_i, sin_i = math.cos(inc), math.sin(inc)

    # Inertial basis of the orbit plane: node direction and in-plane normal
    px, py, pz = cos_o, sin_o, np.zeros_like(cos_o)
    qx, qy, qz = -sin_o * cos_i, cos_o * cos_i, np.full_like(cos_o, sin_i)

    rx = a * (px * cos_u + qx * sin_u)
    ry = a * (py * cos_u + qy * sin_u)
    rz = a * (pz * cos_u + qz * sin_u)
    vx = v * (-px * sin_u + qx * cos_u)
    vy = v * (-py * sin_u + qy * cos_u)
    vz = v * (-pz * sin_u + qz * cos_u)

    # Rotate inertial -> Earth-fixed about the pole by the rotation angle
    era0 = era_rad(orbit.epoch) if omega_earth else 0.0
    theta = era0 + omega_earth * dt_s
    c, s = np.cos(theta), np.sin(theta)
    pos = np.stack([rx * c + ry * s, -rx * s + ry * c, rz], axis=-1)
    vel = np.stack([vx * c + vy * s, -vx * s + vy * c, vz], axis=-1)
    return pos, vel


def propagate(orbit: OrbitSpec, t: datetime) -> SatState:
    """Propagate the circular orbit to time ``t``.

    Raises:
        ValueError: if ``t`` is more than 1 year before or 2 years after
            the orbit epoch (the secular-only model degrades beyond that).
    """
    dt = (t - orbit.epoch).total_seconds()
    if dt < -SIDEREAL_YEAR_S or dt > 2.0 * SIDEREAL_YEAR_S:
        raise ValueError(
            f"time {t.isoformat()} outside propagation range of epoch "
            f"{orbit.epoch.isoformat()} (-1 year .. +2 years)"
        )
    pos, vel = _propagate_arrays(orbit, np.array([dt]))
    return SatState(time=t, position_ecef_km=pos[0], velocity_ecef_km_s=vel[0])


def _topocentric_arrays(
    pos: np.ndarray, vel: np.ndarray, site: GroundSite
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized elevation/azimuth/range/range-rate for (n, 3) state arrays."""
    r_site = site.ecef_km
    east, north, up = site.enu_axes()

    d = pos - r_site
    rng = np.sqrt(np.einsum("ij,ij->i", d, d))
    de = d @ east
    dn = d @ north
    du = d @ up
    elevation = np.degrees(np.arcsin(np.clip(du / rng, -1.0, 1.0)))
    azimuth = np.degrees(np.arctan2(de, dn)) % 360.0

    # Site inertial velocity = omega x r_site (omega along +z)
    v_site = np.array(
        [-OMEGA_EARTH_RAD_S * r_site[1], OMEGA_EARTH_RAD_S * r_site[0], 0.0]
    )
    v_rel = vel - v_site
    radial = np.einsum("ij,ij->i", d, v_rel) / rng
    return elevation, azimuth, rng, radial


def topocentric(sat: SatState, site: GroundSite) -> tuple[float, float, float, float]:
    """Elevation (deg), azimuth (deg), slant range (km), range rate (km/s).

    Range rate is positive when the satellite recedes.  Elevation may be
    negative below the horizon.
    """
    el, az, rng, rad = _topocentric_arrays(
        sat.position_ecef_km[None, :], sat.velocity_ecef_km_s[None, :], site
    )
    return float(el[0]), float(az[0]), float(rng[0]), float(rad[0])


def sso_inclination(altitude_km: float) -> float:
    """Inclination of a circular Sun-synchronous orbit at the given altitude.

    Solves the J2 nodal-regression rate for one full node revolution per
    sidereal year.

    Raises:
        ValueError: if altitude is outside [200, 2000] km or no inclination
            satisfies the condition (|cos i| > 1).
    """
    if not 200.0 <= altitude_km <= 2000.0:
        raise ValueError(f"altitude {altitude_km} km outside the 200-2000 km LEO band")
    a = R_EARTH_KM + altitude_km
    node_rate = 2.0 * math.pi / SIDEREAL_YEAR_S
    cos_i = -node_rate * 2.0 * a**3.5 / (3.0 * J2_EARTH * R_EARTH_KM**2 * math.sqrt(MU_EARTH_KM3_S2))
    if abs(cos_i) > 1.0:
        raise ValueError(f"no Sun-synchronous inclination exists at {altitude_km} km")
    return math.degrees(math.acos(cos_i))


def doppler_shift(f_clock_hz: float, radial_velocity_km_s: float) -> float:
    """First-order Doppler shift of a clock tone; positive when approaching."""
    if abs(radial_velocity_km_s) >= 8.0:
        raise ValueError(
            f"|radial velocity| {radial_velocity_km_s} km/s is not a LEO-to-ground rate"
        )
    return -f_clock_hz * radial_velocity_km_s / SPEED_OF_LIGHT_KM_S


def slant_range_km(altitude_km: float, elevation_deg: float) -> float:
    """Slant range to a satellite at ``altitude_km`` seen at ``elevation_deg``."""
    el = math.radians(elevation_deg)
    r = R_EARTH_KM + altitude_km
    return math.sqrt(r**2 - (R_EARTH_KM * math.cos(el)) ** 2) - R_EARTH_KM * math.sin(el)


def _elevation_at(orbit: OrbitSpec, site: GroundSite, dt_s: float, omega_earth: float) -> float:
    pos, vel = _propagate_arrays(orbit, np.array([dt_s]), omega_earth)
    el, _, _, _ = _topocentric_arrays(pos, vel, site)
    return float(el[0])


def _auto_coarse_step(orbit: OrbitSpec, margin_deg: float = 12.0) -> float:
    """Coarse scan step that cannot skip over an elevation excursion.

    The line-of-sight angular rate is bounded by v_rel / altitude; the scan
    keeps every sample whose elevation is within ``margin_deg`` of the
    threshold, so the step may be margin / max-rate wide on each side.
    """
    v_rel = math.sqrt(MU_EARTH_KM3_S2 / orbit.semi_major_axis_km) + OMEGA_EARTH_RAD_S * R_EARTH_KM
    max_rate_deg_s = math.degrees(v_rel / orbit.altitude_km)
    return max(1.0, 2.0 * margin_deg / max_rate_deg_s)


def find_passes(
    orbit: OrbitSpec,
    site: GroundSite,
    t0: datetime,
    t1: datetime,
    min_elevation_deg: float = 20.0,
    step_s: float = 1.0,
    *,
    keep_samples: bool = True,
    refine_tol_s: float = 0.01,
    _omega_earth: float = OMEGA_EARTH_RAD_S,
) -> list[PassWindow]:
    """All maximal intervals of elevation >= ``min_elevation_deg`` in [t0, t1].

    A coarse scan (step chosen from the worst-case elevation rate) brackets
    candidate intervals, a fine scan at ``step_s`` resolves them, and rise/set
    epochs are refined by bisection to ``refine_tol_s``.  Samples inside each
    pass are spaced ``step_s`` apart starting at the rise epoch.

    Args:
        min_elevation_deg: threshold in (0, 90).
        step_s: sample spacing inside returned passes (default 1 s).
        keep_samples: set False to skip building per-pass sample lists
            (year-long statistical sweeps only need rise/set/duration).

    Returns:
        Time-ordered list of PassWindow (possibly empty).
    """
    if t1 <= t0:
        raise ValueError("t1 must be after t0")
    if not 0.0 < min_elevation_deg < 90.0:
        raise ValueError(f"min elevation {min_elevation_deg} out of (0, 90)")

    span_s = (t1 - t0).total_seconds()
    off_s = (t0 - orbit.epoch).total_seconds()
    margin_deg = 12.0
    coarse = min(_auto_coarse_step(orbit, margin_deg), max(span_s / 4.0, 1.0))
    sin_keep = math.sin(math.radians(max(min_elevation_deg - margin_deg, -89.9)))
    sin_thresh = math.sin(math.radians(min_elevation_deg))

    r_site = site.ecef_km
    east, north, up = site.enu_axes()

    def sin_elevations(dts: np.ndarray) -> np.ndarray:
        pos, _ = _propagate_arrays(orbit, dts, _omega_earth)
        d = pos - r_site
        return (d @ up) / np.sqrt(np.einsum("ij,ij->i", d, d))

    # Coarse scan in chunks, collecting candidate [lo, hi] second-ranges
    candidates: list[tuple[float, float]] = []
    chunk = 2_000_000
    n_coarse = int(span_s / coarse) + 1
    for start in range(0, n_coarse, chunk):
        idx = np.arange(start, min(start + chunk, n_coarse), dtype=np.float64)
        dts = off_s + idx * coarse
        mask = sin_elevations(dts) >= sin_keep
        if not mask.any():
            continue
        m = mask.astype(np.int8)
        rises = np.flatnonzero(np.diff(m) == 1) + 1
        falls = np.flatnonzero(np.diff(m) == -1) + 1
        run_starts = ([0] if m[0] else []) + list(rises)
        run_ends = list(falls) + ([len(m)] if m[-1] else [])
        for rs, re in zip(run_starts, run_ends):
            lo = off_s + (start + rs) * coarse - coarse
            hi = off_s + (start + re - 1) * coarse + coarse
            candidates.append((max(lo, off_s), min(hi, off_s + span_s)))

    # Merge overlapping candidate ranges (passes can straddle chunk joins)
    candidates.sort()
    merged: list[list[float]] = []
    for lo, hi in candidates:
        if merged and lo <= merged[-1][1] + coarse:
            merged[-1][1] = max(merged[-1][1], hi)
        else:
            merged.append([lo, hi])

    def bisect_crossing(lo: float, hi: float, rising: bool) -> float:
        """Crossing time of the threshold inside (lo, hi), to refine_tol_s."""
        while hi - lo > refine_tol_s:
            mid = 0.5 * (lo + hi)
            above = _elevation_at(orbit, site, mid, _omega_earth) >= min_elevation_deg
            if above == rising:
                hi = mid
            else:
                lo = mid
        return 0.5 * (lo + hi)

    passes: list[PassWindow] = []
    for lo, hi in merged:
        n_fine = int((hi - lo) / step_s) + 1
        dts = lo + np.arange(n_fine) * step_s
        dts = dts[dts <= off_s + span_s + 1e-9]
        if len(dts) < 2:
            continue
        above = sin_elevations(dts) >= sin_thresh
        m = above.astype(np.int8)
        rises = list(np.flatnonzero(np.diff(m) == 1) + 1)
        falls = list(np.flatnonzero(np.diff(m) == -1) + 1)
        run_starts = ([0] if m[0] else []) + rises
        run_ends = falls + ([len(m)] if m[-1] else [])
        for rs, re in zip(run_starts, run_ends):
            if rs == 0:
                rise_dt = dts[0]  # already above threshold at interval start
            else:
                rise_dt = bisect_crossing(dts[rs - 1], dts[rs], rising=True)
            if re == len(m):
                set_dt = dts[-1]
            else:
                set_dt = bisect_crossing(dts[re - 1], dts[re], rising=False)
            if set_dt - rise_dt < refine_tol_s:
                continue
            passes.append(
                _build_pass(orbit, site, rise_dt, set_dt, step_s, keep_samples, _omega_earth)
            )
    passes.sort(key=lambda p: p.rise)
    return passes


def _build_pass(
    orbit: OrbitSpec,
    site: GroundSite,
    rise_dt: float,
    set_dt: float,
    step_s: float,
    keep_samples: bool,
    omega_earth: float,
) -> PassWindow:
    eps = 1e-6  # nudge off the exact threshold crossing
    n = max(int((set_dt - rise_dt - 2 * eps) / step_s) + 1, 2)
    dts = rise_dt + eps + np.arange(n) * step_s
    dts = dts[dts <= set_dt - eps]
    if len(dts) == 0:
        dts = np.array([0.5 * (rise_dt + set_dt)])
    pos, vel = _propagate_arrays(orbit, dts, omega_earth)
    el, az, rng, rad = _topocentric_arrays(pos, vel, site)
    samples = []
    if keep_samples:
        samples = [
            PassSample(
                orbit.epoch + timedelta(seconds=float(dt)),
                float(e), float(a), float(r), float(v),
            )
            for dt, e, a, r, v in zip(dts, el, az, rng, rad)
        ]
    return PassWindow(
        rise=orbit.epoch + timedelta(seconds=rise_dt),
        set=orbit.epoch + timedelta(seconds=set_dt),
        max_elevation_deg=float(el.max()),
        samples=samples,
    )


def pass_samples_csv_rows(passes: list[PassWindow]) -> list[tuple]:
    """Rows (time_utc, elevation_deg, azimuth_deg, slant_range_km,
    radial_velocity_km_s) concatenated over the given passes."""
    rows = []
    for pw in passes:
        for s in pw.samples:
            rows.append(
                (
                    s.time.isoformat(),
                    s.elevation_deg,
                    s.azimuth_deg,
                    s.slant_range_km,
                    s.radial_velocity_km_s,
                )
            )
    return rows
