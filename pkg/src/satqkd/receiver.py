"""Four-port polarization receiver: beamsplitter tree, detectors, time tags.

Topology: a 50/50 non-polarizing beamsplitter selects the measurement basis
per photon; the rectilinear arm feeds a polarizing beamsplitter (ports H at
0 deg and V at 90 deg) and the diagonal arm passes a fixed 22.5-deg
half-wave plate before an identical polarizing beamsplitter (ports D at
+45 deg and A at -45 deg).  A compensator half-wave plate at ``hwp_angle_deg``
in front of everything maps an arrival angle theta to theta - 2*hwp.

Per arriving photon the detection probability at port i is

    q_i(theta) = 1/2 * cos^2(theta_eff - axis_i) * eta_i

and Poisson pulse statistics thin port-by-port into independent Poisson
click counts, which is what :func:`run_pass` exploits: per time group and
key-bit class it draws Poisson click totals per port and scatters them
uniformly over that group's pulse slots - exactly the per-pulse Poisson
model without enumerating 10^9 pulses.

Click streams are stored as parallel numpy arrays and serialize to the
TTAG1 format: ASCII header line ``TTAG1\\n``, little-endian uint64 record
count, then 9-byte records of int64 picosecond tag plus one port byte
(0=H, 1=V, 2=D, 3=A).
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import CalibrationError, CoverageError
from .source import TxFrame

PORT_H, PORT_V, PORT_D, PORT_A = 0, 1, 2, 3
PORT_NAMES = ("H", "V", "D", "A")

# Analyzer axes of the four ports, degrees (D/A realized by the fixed
# 22.5-deg half-wave plate in front of the diagonal-arm PBS)
_PORT_AXES_DEG = np.array([0.0, 90.0, 45.0, -45.0])

_TTAG_MAGIC = b"TTAG1\n"
_TTAG_DTYPE = np.dtype([("tag_ps", "<i8"), ("port", "u1")])


@dataclass(frozen=True)
class ReceiverModel:
    """Detector-chain parameters of the four-port receiver."""

    port_efficiencies: tuple[float, float, float, float] = (0.5, 0.5, 0.5, 0.5)
    dark_rate_hz_per_port: float = 500.0
    timing_jitter_sigma_ps: float = 350.0
    dead_time_ps: int = 50_000
    hwp_angle_deg: float = 0.0  # compensator HWP; receiver is free-running

    def __post_init__(self):
        if len(self.port_efficiencies) != 4 or any(
            not 0.0 <= e <= 1.0 for e in self.port_efficiencies
        ):
            raise ValueError("port efficiencies must be four values in [0, 1]")
        if self.dark_rate_hz_per_port < 0 or self.timing_jitter_sigma_ps < 0:
            raise ValueError("dark rate and jitter must be non-negative")
        if self.dead_time_ps < 0:
            raise ValueError("dead time must be non-negative")


class ClickEvent(NamedTuple):
    tag_ps: int
    port: int


def port_probabilities(arrival_angle_deg: float, model: ReceiverModel) -> np.ndarray:
    """Detection probability per arriving photon at ports (H, V, D, A)."""
    theta_eff = arrival_angle_deg - 2.0 * model.hwp_angle_deg
    malus = np.cos(np.radians(theta_eff - _PORT_AXES_DEG)) ** 2
    return 0.5 * malus * np.asarray(model.port_efficiencies)


def route_photons(
    arrival_angle_deg: float, n: int, model: ReceiverModel, rng: np.random.Generator
) -> np.ndarray:
    """Route ``n`` photons through the receiver; returns the port index per
    photon, with -1 for photons lost to port efficiency."""
    theta_eff = arrival_angle_deg - 2.0 * model.hwp_angle_deg
    diagonal = rng.random(n) < 0.5
    ports = np.where(
        diagonal,
        np.where(rng.random(n) < np.cos(np.radians(theta_eff - 45.0)) ** 2, PORT_D, PORT_A),
        np.where(rng.random(n) < np.cos(np.radians(theta_eff)) ** 2, PORT_H, PORT_V),
    )
    eff = np.asarray(model.port_efficiencies)[ports]
    ports = np.where(rng.random(n) < eff, ports, -1)
    return ports


def detect_pulse(
    pulse,
    arrival_angle_deg: float,
    n_photons: int,
    model: ReceiverModel,
    rng: np.random.Generator,
) -> list[ClickEvent]:
    """Detect one pulse carrying ``n_photons`` at the given arrival angle.

    The pulse only contributes its emission epoch (``emit_time_ps``); timing
    jitter is added per photon and per-port dead time applied inside the
    pulse.  Returns time-ordered clicks.
    """
    if n_photons < 0:
        raise ValueError("photon number must be non-negative")
    if n_photons == 0:
        return []
    ports = route_photons(arrival_angle_deg, n_photons, model, rng)
    ports = ports[ports >= 0]
    if len(ports) == 0:
        return []
    tags = pulse.emit_time_ps + np.round(
        rng.normal(0.0, model.timing_jitter_sigma_ps, size=len(ports))
    ).astype(np.int64)
    order = np.argsort(tags, kind="stable")
    tags, ports = tags[order], ports[order]
    clicks: list[ClickEvent] = []
    last_tag = {}
    for t, p in zip(tags, ports):
        if p in last_tag and t - last_tag[p] < model.dead_time_ps:
            continue
        last_tag[p] = t
        clicks.append(ClickEvent(int(t), int(p)))
    return clicks


@dataclass
class ClickStream:
    """Time-ordered detector clicks as parallel arrays."""

    tag_ps: np.ndarray  # int64, non-decreasing
    port: np.ndarray    # uint8 in {0, 1, 2, 3}

    def __post_init__(self):
        self.tag_ps = np.asarray(self.tag_ps, dtype=np.int64)
        self.port = np.asarray(self.port, dtype=np.uint8)
        if self.tag_ps.shape != self.port.shape:
            raise ValueError("tag and port arrays must have equal length")

    def __len__(self) -> int:
        return len(self.tag_ps)

    def __iter__(self):
        for t, p in zip(self.tag_ps, self.port):
            yield ClickEvent(int(t), int(p))

    def port_counts(self) -> np.ndarray:
        return np.bincount(self.port, minlength=4)[:4]

    def span_s(self) -> float:
        if len(self) == 0:
            return 0.0
        return float(self.tag_ps[-1] - self.tag_ps[0]) * 1e-12

    def select(self, mask: np.ndarray) -> "ClickStream":
        return ClickStream(self.tag_ps[mask], self.port[mask])

    @staticmethod
    def from_events(events: list[ClickEvent]) -> "ClickStream":
        if not events:
            return ClickStream(np.empty(0, np.int64), np.empty(0, np.uint8))
        arr = np.array(events, dtype=np.int64)
        order = np.argsort(arr[:, 0], kind="stable")
        return ClickStream(arr[order, 0], arr[order, 1].astype(np.uint8))

    def save_ttag(self, path) -> None:
        rec = np.empty(len(self), dtype=_TTAG_DTYPE)
        rec["tag_ps"] = self.tag_ps
        rec["port"] = self.port
        with open(path, "wb") as fh:
            fh.write(_TTAG_MAGIC)
            fh.write(struct.pack("<Q", len(self)))
            fh.write(rec.tobytes())

    @staticmethod
    def load_ttag(path) -> "ClickStream":
        with open(path, "rb") as fh:
            magic = fh.read(len(_TTAG_MAGIC))
            if magic != _TTAG_MAGIC:
                raise ValueError(f"not a TTAG1 file: {path}")
            (count,) = struct.unpack("<Q", fh.read(8))
            rec = np.frombuffer(fh.read(count * _TTAG_DTYPE.itemsize), dtype=_TTAG_DTYPE)
            if len(rec) != count:
                raise ValueError(f"truncated TTAG1 file: {path}")
        return ClickStream(rec["tag_ps"].copy(), rec["port"].copy())

    def csv_rows(self) -> list[tuple[int, str]]:
        return [(int(t), PORT_NAMES[p]) for t, p in zip(self.tag_ps, self.port)]


@dataclass
class ChannelProfile:
    """Per-pass channel: transmittance, frame angle and propagation delay.

    All profiles are sampled on the common ``times_s`` grid (transmitter
    timeline, seconds from frame start) and linearly interpolated.  The
    delay profile produces the Doppler time warp of arrival tags; it is
    normalized so the first sample has zero delay.  ``port_scale`` optionally
    modulates the four port efficiencies over time (n x 4).
    """

    times_s: np.ndarray
    transmittance: np.ndarray
    frame_angle_deg: np.ndarray
    delay_s: np.ndarray | None = None
    port_scale: np.ndarray | None = None

    def __post_init__(self):
        self.times_s = np.asarray(self.times_s, dtype=float)
        self.transmittance = np.asarray(self.transmittance, dtype=float)
        self.frame_angle_deg = np.asarray(self.frame_angle_deg, dtype=float)
        if self.times_s.ndim != 1 or len(self.times_s) < 2:
            raise ValueError("profile needs at least two time samples")
        if np.any(np.diff(self.times_s) <= 0):
            raise ValueError("profile times must be strictly increasing")
        for name in ("transmittance", "frame_angle_deg"):
            if getattr(self, name).shape != self.times_s.shape:
                raise ValueError(f"{name} must match the time grid")
        if np.any(self.transmittance < 0) or np.any(self.transmittance > 1):
            raise ValueError("transmittance must lie in [0, 1]")
        if self.delay_s is not None:
            self.delay_s = np.asarray(self.delay_s, dtype=float)
            if self.delay_s.shape != self.times_s.shape:
                raise ValueError("delay_s must match the time grid")
            self.delay_s = self.delay_s - self.delay_s[0]
        if self.port_scale is not None:
            self.port_scale = np.asarray(self.port_scale, dtype=float)
            if self.port_scale.shape != (len(self.times_s), 4):
                raise ValueError("port_scale must be (n_times, 4)")

    @staticmethod
    def from_range_profile(
        times_s, range_km, transmittance, frame_angle_deg, port_scale=None
    ) -> "ChannelProfile":
        from .constants import SPEED_OF_LIGHT_KM_S

        delay = np.asarray(range_km, dtype=float) / SPEED_OF_LIGHT_KM_S
        return ChannelProfile(times_s, transmittance, frame_angle_deg, delay, port_scale)

    def require_coverage(self, duration_s: float) -> None:
        if self.times_s[0] > 1e-9 or self.times_s[-1] < duration_s - 1e-9:
            raise CoverageError(
                f"profile covers [{self.times_s[0]:.3f}, {self.times_s[-1]:.3f}] s "
                f"but the frame lasts {duration_s:.3f} s"
            )

    def transmittance_at(self, t):
        return np.interp(t, self.times_s, self.transmittance)

    def angle_at(self, t):
        return np.interp(t, self.times_s, self.frame_angle_deg)

    def delay_at(self, t):
        if self.delay_s is None:
            return np.zeros_like(np.asarray(t, dtype=float))
        return np.interp(t, self.times_s, self.delay_s)

    def port_scale_at(self, t) -> np.ndarray:
        if self.port_scale is None:
            return np.ones(4)
        return np.array(
            [np.interp(t, self.times_s, self.port_scale[:, i]) for i in range(4)]
        )

    @staticmethod
    def static(duration_s, transmittance=1.0, frame_angle_deg=0.0) -> "ChannelProfile":
        return ChannelProfile(
            np.array([0.0, duration_s]),
            np.full(2, transmittance),
            np.full(2, frame_angle_deg),
        )


def _dead_time_filter(tags: np.ndarray, dead_ps: int) -> np.ndarray:
    """Greedy dead-time mask over sorted tags of one port."""
    if dead_ps <= 0 or len(tags) < 2:
        return np.ones(len(tags), dtype=bool)
    keep = np.ones(len(tags), dtype=bool)
    if np.all(np.diff(tags) >= dead_ps):
        return keep
    last = tags[0]
    for i in range(1, len(tags)):
        if tags[i] - last < dead_ps:
            keep[i] = False
        else:
            last = tags[i]
    return keep


def run_pass(
    tx: TxFrame,
    channel: ChannelProfile,
    model: ReceiverModel,
    rng: np.random.Generator,
    *,
    group_s: float = 0.1,
    include_dark: bool = True,
) -> ClickStream:
    """Simulate the full pass and return the merged, time-sorted click stream.

    The frame is cut into groups of ``group_s`` seconds over which the
    channel is treated as constant (transmittance, frame angle, port scale
    evaluated at the group center).  Within a group, for each key-bit class
    and port, the click total is Poisson with mean
    ``n_pulses * mu * T * q_port`` and clicks scatter uniformly over that
    class's pulse slots; coincident multi-photon clicks across ports arise
    naturally from the independent Poisson draws.  Dark counts are uniform
    per port over the observed span, and every arrival tag is warped by the
    channel delay profile before jitter is added.
    """
    channel.require_coverage(tx.duration_s)
    clock = tx.clock_hz
    n_slots = tx.n_slots
    slot_ps = tx.slot_ps

    edges = np.arange(0.0, tx.duration_s, group_s)
    edges = np.append(edges, tx.duration_s)

    tags_per_port: list[list[np.ndarray]] = [[] for _ in range(4)]

    for lo, hi in zip(edges[:-1], edges[1:]):
        s_lo = int(math.ceil(lo * clock - 1e-9))
        s_hi = min(int(math.ceil(hi * clock - 1e-9)), n_slots)
        if s_hi <= s_lo:
            continue
        mid = 0.5 * (lo + hi)
        t_mid = float(channel.transmittance_at(mid))
        angle_mid = float(channel.angle_at(mid))
        scale_mid = channel.port_scale_at(mid)
        for bit, angle_tx in ((1, 0.0), (0, 45.0)):
            n_pulses = tx.pulse_count(s_lo, s_hi, bit)
            if n_pulses == 0 or t_mid == 0.0:
                continue
            q = port_probabilities(angle_tx + angle_mid, model) * scale_mid
            lam = tx.mean_photons * t_mid * q
            for p in range(4):
                if lam[p] <= 0.0:
                    continue
                k = int(rng.poisson(n_pulses * lam[p]))
                if k == 0:
                    continue
                ordinals = rng.integers(0, n_pulses, size=k)
                slots = tx.pulse_slots(s_lo, ordinals, bit)
                emit_s = slots * (1.0 / clock)
                arr_ps = slots * slot_ps + channel.delay_at(emit_s) * 1e12
                arr_ps += rng.normal(0.0, model.timing_jitter_sigma_ps, size=k)
                tags_per_port[p].append(np.round(arr_ps).astype(np.int64))

    if include_dark and model.dark_rate_hz_per_port > 0:
        t_first = float(channel.delay_at(0.0))
        t_last = tx.duration_s + float(channel.delay_at(tx.duration_s))
        span = t_last - t_first
        for p in range(4):
            k = int(rng.poisson(model.dark_rate_hz_per_port * span))
            if k == 0:
                continue
            t = rng.uniform(t_first, t_last, size=k)
            tags_per_port[p].append(np.round(t * 1e12).astype(np.int64))

    all_tags, all_ports = [], []
    for p in range(4):
        if not tags_per_port[p]:
            continue
        tags = np.sort(np.concatenate(tags_per_port[p]), kind="stable")
        keep = _dead_time_filter(tags, model.dead_time_ps)
        tags = tags[keep]
        all_tags.append(tags)
        all_ports.append(np.full(len(tags), p, dtype=np.uint8))

    if not all_tags:
        return ClickStream(np.empty(0, np.int64), np.empty(0, np.uint8))
    tags = np.concatenate(all_tags)
    ports = np.concatenate(all_ports)
    order = np.argsort(tags, kind="stable")
    return ClickStream(tags[order], ports[order])


def calibrate_ports(reference_counts) -> np.ndarray:
    """Balance weights from reference-source counts: w_i = mean(c) / c_i.

    With these weights the weighted counts ``c_i * w_i`` are all equal to the
    mean count (their harmonic mean is exactly 1).
    """
    counts = np.asarray(reference_counts, dtype=float)
    if counts.shape != (4,):
        raise CalibrationError("expected four reference counts")
    if np.any(counts <= 0):
        raise CalibrationError(f"reference counts must be positive, got {counts}")
    return counts.mean() / counts
