"""Stokes/Jones polarization algebra and received-angle prediction.

Linear polarization angles are axis-like (180-degree periodic) and are
normalized to [-90, 90).  Frame rotations act on the Stokes vector as a
rotation by twice the physical angle about the S3 axis of the Poincare
sphere.

The received-angle prediction carries a transmitter-fixed polarization axis
through the attitude chain (nadir-pointing satellite body, configurable
gimbal rotation), projects it onto the plane transverse to the line of
sight, and measures it against the ground site's east axis projected onto
the same plane.  The satellite-side frame conventions are a documented
modeling choice; only shape properties (continuity, constructed-alignment
zero, mirror antisymmetry) are guaranteed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateGeometryError, GeometryError
from .orbit import GroundSite, SatState, topocentric


def normalize_angle_deg(angle: float) -> float:
    """Fold an axis-like angle into [-90, 90)."""
    a = (angle + 90.0) % 180.0 - 90.0
    return -90.0 if a == 90.0 else a


@dataclass(frozen=True)
class StokesState:
    """Stokes vector (s0, s1, s2, s3); s0 is total power in arbitrary units."""

    s0: float
    s1: float
    s2: float
    s3: float

    def __post_init__(self):
        if self.s0 < 0:
            raise ValueError("s0 must be non-negative")
        pol = math.sqrt(self.s1**2 + self.s2**2 + self.s3**2)
        if pol > self.s0 * (1.0 + 1e-9):
            raise ValueError(
                f"polarized power {pol} exceeds total power {self.s0}"
            )

    @staticmethod
    def linear(angle_deg: float, power: float = 1.0) -> "StokesState":
        a = math.radians(2.0 * angle_deg)
        return StokesState(power, power * math.cos(a), power * math.sin(a), 0.0)

    def as_array(self) -> np.ndarray:
        return np.array([self.s0, self.s1, self.s2, self.s3])


@dataclass(frozen=True)
class LinearPolarization:
    """Physical polarization plane angle in the transverse frame, degrees."""

    angle_deg: float

    def __post_init__(self):
        object.__setattr__(self, "angle_deg", normalize_angle_deg(self.angle_deg))


def rotate_frame(state: StokesState, theta_deg: float) -> StokesState:
    """Rotate the polarization frame by theta: (s1, s2) turn by 2*theta."""
    if not math.isfinite(theta_deg):
        raise ValueError("rotation angle must be finite")
    a = math.radians(2.0 * theta_deg)
    c, s = math.cos(a), math.sin(a)
    return StokesState(
        state.s0,
        state.s1 * c - state.s2 * s,
        state.s1 * s + state.s2 * c,
        state.s3,
    )


def retarder_mueller(delta_deg: float, fast_axis_deg: float) -> np.ndarray:
    """Mueller matrix of a linear retarder (retardance delta, fast axis angle)."""
    r = math.radians(delta_deg)
    a = math.radians(fast_axis_deg)
    c2, s2 = math.cos(2 * a), math.sin(2 * a)
    cr, sr = math.cos(r), math.sin(r)
    return np.array(
        [
            [1, 0, 0, 0],
            [0, c2**2 + cr * s2**2, (1 - cr) * c2 * s2, -sr * s2],
            [0, (1 - cr) * c2 * s2, cr * c2**2 + s2**2, c2 * sr],
            [0, sr * s2, -c2 * sr, cr],
        ]
    )


def apply_retardance(state: StokesState, delta_deg: float, fast_axis_deg: float) -> StokesState:
    """Send the state through a linear retarder; s0 and DOP are preserved."""
    if not (math.isfinite(delta_deg) and math.isfinite(fast_axis_deg)):
        raise ValueError("retardance and fast axis must be finite")
    out = retarder_mueller(delta_deg, fast_axis_deg) @ state.as_array()
    return StokesState(*out)


def dop(state: StokesState) -> float:
    """Degree of polarization sqrt(s1^2+s2^2+s3^2)/s0."""
    if state.s0 <= 0:
        raise ValueError("degree of polarization undefined for s0 <= 0")
    return math.sqrt(state.s1**2 + state.s2**2 + state.s3**2) / state.s0


def malus_probability(photon: LinearPolarization, analyzer_angle_deg: float) -> float:
    """cos^2 of the angle between photon polarization and analyzer axis."""
    if not math.isfinite(analyzer_angle_deg):
        raise ValueError("analyzer angle must be finite")
    return math.cos(math.radians(photon.angle_deg - analyzer_angle_deg)) ** 2


def _unit(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v)
    if n == 0:
        raise ValueError("zero vector has no direction")
    return v / n


@dataclass(frozen=True)
class FrameChain:
    """Attitude chain from transmitter polarization axis to Earth-fixed axes.

    The satellite body frame is nadir-pointing LVLH: +z toward the Earth
    center, +x along the transverse velocity, +y completing the triad.
    ``gimbal_to_body`` rotates gimbal axes into the body frame (identity by
    default); the transmitter polarization reference is the gimbal +x axis
    expressed by ``pol_axis_gimbal``.

    ``retardance_deg_vs_elevation`` optionally maps elevation (deg) to a
    receiver-path retardance (deg) applied by analysis code; default empty
    table means zero retardance everywhere.
    """

    gimbal_to_body: np.ndarray = field(default_factory=lambda: np.eye(3))
    pol_axis_gimbal: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0]))
    retardance_deg_vs_elevation: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        r = np.asarray(self.gimbal_to_body, dtype=float)
        if r.shape != (3, 3):
            raise ValueError("gimbal_to_body must be a 3x3 rotation")
        if not np.allclose(r @ r.T, np.eye(3), atol=1e-9) or abs(np.linalg.det(r) - 1.0) > 1e-9:
            raise ValueError("gimbal_to_body must be orthonormal with det +1")
        object.__setattr__(self, "gimbal_to_body", r)
        object.__setattr__(self, "pol_axis_gimbal", _unit(np.asarray(self.pol_axis_gimbal, float)))

    def retardance_at(self, elevation_deg: float) -> float:
        table = self.retardance_deg_vs_elevation
        if not table:
            return 0.0
        els = np.array([p[0] for p in table])
        rets = np.array([p[1] for p in table])
        return float(np.interp(elevation_deg, els, rets))


def body_axes(sat: SatState) -> np.ndarray:
    """Nadir-pointing LVLH body axes as columns [x, y, z] in Earth-fixed axes."""
    r_hat = _unit(sat.position_ecef_km)
    z = -r_hat
    v_t = sat.velocity_ecef_km_s - (sat.velocity_ecef_km_s @ r_hat) * r_hat
    x = _unit(v_t)
    y = np.cross(z, x)
    return np.column_stack([x, y, z])


def predicted_rotation_angle(sat: SatState, site: GroundSite, chain: FrameChain) -> float:
    """Polarization angle the site should measure, degrees in [-90, 90).

    Raises:
        GeometryError: satellite below the site horizon.
        DegenerateGeometryError: polarization axis or site reference is
            parallel to the line of sight.
    """
    elevation, _, _, _ = topocentric(sat, site)
    if elevation <= 0.0:
        raise GeometryError(
            f"satellite below horizon of {site.name} (elevation {elevation:.2f} deg)"
        )

    pol_ecef = body_axes(sat) @ (chain.gimbal_to_body @ chain.pol_axis_gimbal)
    los = _unit(site.ecef_km - sat.position_ecef_km)

    pol_t = pol_ecef - (pol_ecef @ los) * los
    if np.linalg.norm(pol_t) < 1e-9:
        raise DegenerateGeometryError("polarization axis parallel to line of sight")
    east, _, _ = site.enu_axes()
    ref_t = east - (east @ los) * los
    if np.linalg.norm(ref_t) < 1e-9:
        raise DegenerateGeometryError("site east axis parallel to line of sight")

    p, e = _unit(pol_t), _unit(ref_t)
    angle = math.degrees(math.atan2(float(np.cross(e, p) @ los), float(e @ p)))
    return normalize_angle_deg(angle)


def rotation_angle_profile(
    states: list[SatState], site: GroundSite, chain: FrameChain
) -> np.ndarray:
    """predicted_rotation_angle over a list of states (NaN below horizon)."""
    out = np.full(len(states), np.nan)
    for i, st in enumerate(states):
        try:
            out[i] = predicted_rotation_angle(st, site, chain)
        except GeometryError:
            pass
    return out
