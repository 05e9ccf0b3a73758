"""Trusted-node key relay between two ground stations and altitude studies.

A satellite holding keys from QKD sessions with two different ground
stations publishes their XOR over an authenticated public channel; the
second station recovers the first station's key, after which both ends
share it.  Both the downlink variant (satellite is the transmitter Alice)
and the uplink variant (ground stations transmit to the satellite Bob) run
the same algebra and differ only in who computes and who receives the XOR.

The altitude study simulates one year of Sun-synchronous passes over the
two stations, pairs each pass with the most recent pass over the other
station (no pass is reused), credits the shorter of the two session
durations per the conservative bookkeeping, and accumulates total key time,
mean gap between stations and mean session length per altitude.  Links are
assumed cloud-free and usable day and night.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta

import numpy as np

from .errors import ProtocolError, UnderrunError
from .orbit import GroundSite, OrbitSpec, PassWindow, find_passes, sso_inclination


@dataclass
class KeyMaterial:
    """Fixed-length key bits; single-use once consumed by a relay."""

    bits: np.ndarray
    origin: str
    consumed: bool = False

    def __post_init__(self):
        self.bits = np.asarray(self.bits, dtype=np.uint8)
        if self.bits.ndim != 1 or len(self.bits) == 0:
            raise ProtocolError("key must be a non-empty bit vector")
        if np.any(self.bits > 1):
            raise ProtocolError("key bits must be 0/1")

    def __len__(self) -> int:
        return len(self.bits)

    def mark_consumed(self) -> None:
        if self.consumed:
            raise ProtocolError(f"key {self.origin!r} already consumed")
        self.consumed = True


def xor_relay(key1: KeyMaterial, key2: KeyMaterial) -> KeyMaterial:
    """Bitwise XOR of two equal-length keys."""
    if len(key1) != len(key2):
        raise ProtocolError(
            f"key length mismatch: {len(key1)} vs {len(key2)} bits"
        )
    return KeyMaterial(np.bitwise_xor(key1.bits, key2.bits),
                       origin=f"{key1.origin}^{key2.origin}")


def transmission_time_s(n_bits: int, rate_bit_s: float) -> float:
    """In-pass time needed to transmit ``n_bits`` at the session rate."""
    if n_bits <= 0 or rate_bit_s <= 0:
        raise ValueError("bits and rate must be positive")
    return n_bits / rate_bit_s


@dataclass
class KeySession:
    """One QKD session: one pass over one ground station at a sifted rate."""

    ogs: GroundSite
    pass_window: PassWindow
    rate_bit_s: float
    key: KeyMaterial | None = field(default=None, repr=False)

    @property
    def duration_s(self) -> float:
        return self.pass_window.duration_s

    @property
    def delivered_bits(self) -> int:
        return int(math.floor(self.duration_s * self.rate_bit_s))

    def draw_key(self, n_bits: int, rng: np.random.Generator) -> KeyMaterial:
        if self.key is not None:
            raise ProtocolError(f"session over {self.ogs.name} already used")
        if self.delivered_bits < n_bits:
            raise UnderrunError(
                f"session over {self.ogs.name} delivered {self.delivered_bits} bits "
                f"< requested {n_bits}"
            )
        self.key = KeyMaterial(rng.integers(0, 2, n_bits, dtype=np.uint8),
                               origin=f"{self.ogs.name}@{self.pass_window.rise.isoformat()}")
        return self.key


@dataclass(frozen=True)
class TranscriptRecord:
    event_time: datetime
    actor: str
    action: str
    key_id: str

    def line(self) -> str:
        return f"{self.event_time.isoformat()} {self.actor} {self.action} {self.key_id}"


@dataclass
class RelayTranscript:
    variant: str
    records: list[TranscriptRecord]
    shared_key: KeyMaterial

    def lines(self) -> list[str]:
        return [r.line() for r in self.records]


def run_relay(
    variant: str,
    session_a: KeySession,
    session_b: KeySession,
    key_length_bits: int = 256,
    rng: np.random.Generator | None = None,
) -> RelayTranscript:
    """Execute one key distribution over two sessions at distinct stations.

    Returns the message transcript; after it completes, both ground stations
    hold ``key1`` (verified bit-for-bit) and the satellite-side key material
    is marked consumed.

    Raises:
        ProtocolError: same station twice, reused sessions or keys.
        UnderrunError: a session's pass is too short for the key length.
    """
    if variant not in ("downlink", "uplink"):
        raise ValueError(f"unknown relay variant {variant!r}")
    if session_a.ogs.name == session_b.ogs.name:
        raise ProtocolError("relay needs two distinct ground stations")
    rng = np.random.default_rng() if rng is None else rng

    sat = "satellite"
    a, b = session_a.ogs.name, session_b.ogs.name
    key1 = session_a.draw_key(key_length_bits, rng)
    key2 = session_b.draw_key(key_length_bits, rng)

    t1 = session_a.pass_window.rise
    t2 = session_b.pass_window.rise
    done = session_b.pass_window.set
    records = []
    if variant == "downlink":
        records.append(TranscriptRecord(t1, sat, f"qkd-link key1 -> {a}", key1.origin))
        records.append(TranscriptRecord(t2, sat, f"qkd-link key2 -> {b}", key2.origin))
        key3 = xor_relay(key1, key2)
        records.append(TranscriptRecord(done, sat, f"public-1 key3 -> {b}", key3.origin))
        recovered = KeyMaterial(np.bitwise_xor(key2.bits, key3.bits), origin=key1.origin)
        records.append(TranscriptRecord(done, b, "recover key1 = key2 xor key3", key1.origin))
    else:
        records.append(TranscriptRecord(t1, a, "qkd-link key1 -> satellite", key1.origin))
        records.append(TranscriptRecord(t2, b, "qkd-link key2 -> satellite", key2.origin))
        key3 = xor_relay(key1, key2)
        records.append(TranscriptRecord(done, sat, f"public-1 key3 -> {b}", key3.origin))
        recovered = KeyMaterial(np.bitwise_xor(key2.bits, key3.bits), origin=key1.origin)
        records.append(TranscriptRecord(done, b, "recover key1 = key2 xor key3", key1.origin))

    if not np.array_equal(recovered.bits, key1.bits):
        raise ProtocolError("relay algebra failed to reproduce key1")
    records.append(TranscriptRecord(done, f"{a}+{b}", "public-2 ready (shared key1)",
                                    key1.origin))
    # satellite memory consumed: the relayed pair cannot be reused
    key1.mark_consumed()
    key2.mark_consumed()
    return RelayTranscript(variant, records, recovered)


@dataclass(frozen=True)
class DistributionEvent:
    """Two sessions at distinct stations completing one key distribution."""

    session_a: KeySession
    session_b: KeySession
    completion_time: datetime
    credited_time_s: float

    def __post_init__(self):
        if self.session_a.ogs.name == self.session_b.ogs.name:
            raise ProtocolError("distribution requires two distinct stations")


def pair_passes(
    passes: list[tuple[GroundSite, PassWindow]], rate_bit_s: float = 1000.0
) -> list[DistributionEvent]:
    """Pair time-ordered passes into distribution events.

    A pending pass is replaced by a newer pass over the same station (the
    fresher key supersedes it) and paired by the first pass over the other
    station; paired passes are never reused.
    """
    ordered = sorted(passes, key=lambda item: item[1].rise)
    events: list[DistributionEvent] = []
    pending: tuple[GroundSite, PassWindow] | None = None
    for site, pw in ordered:
        if pending is None or pending[0].name == site.name:
            pending = (site, pw)
            continue
        sa = KeySession(pending[0], pending[1], rate_bit_s)
        sb = KeySession(site, pw, rate_bit_s)
        events.append(
            DistributionEvent(
                sa, sb, completion_time=pw.set,
                credited_time_s=min(sa.duration_s, sb.duration_s),
            )
        )
        pending = None
    return events


@dataclass(frozen=True)
class SweepRow:
    altitude_km: float
    total_key_time_s: float
    mean_time_between_ogs_s: float
    mean_session_s: float
    n_distributions: int


def altitude_sweep(
    altitudes_km,
    site_a: GroundSite,
    site_b: GroundSite,
    year: int = 2018,
    min_elevation_deg: float = 20.0,
    rate_bit_s: float = 1000.0,
    *,
    days: float = 365.0,
    step_s: float = 1.0,
) -> list[SweepRow]:
    """Key-distribution statistics per altitude over ``days`` of SSO passes.

    Each altitude gets a circular Sun-synchronous orbit epoched at the start
    of ``year``.  Rows with ``n_distributions == 0`` flag empty statistics.
    """
    t0 = datetime(year, 1, 1)
    t1 = t0 + timedelta(days=days)
    rows = []
    for alt in altitudes_km:
        orbit = OrbitSpec(alt, sso_inclination(alt), raan_deg=0.0,
                          arg_lat_epoch_deg=0.0, epoch=t0, j2_enabled=True)
        tagged: list[tuple[GroundSite, PassWindow]] = []
        for site in (site_a, site_b):
            for pw in find_passes(orbit, site, t0, t1, min_elevation_deg,
                                  step_s=step_s, keep_samples=False):
                tagged.append((site, pw))
        events = pair_passes(tagged, rate_bit_s)
        if not events:
            rows.append(SweepRow(alt, 0.0, 0.0, 0.0, 0))
            continue
        total = sum(e.credited_time_s for e in events)
        gaps = [
            (e.session_b.pass_window.rise - e.session_a.pass_window.set).total_seconds()
            for e in events
        ]
        sessions = [e.session_a.duration_s for e in events] + [
            e.session_b.duration_s for e in events
        ]
        rows.append(
            SweepRow(
                altitude_km=alt,
                total_key_time_s=total,
                mean_time_between_ogs_s=float(np.mean(gaps)),
                mean_session_s=float(np.mean(sessions)),
                n_distributions=len(events),
            )
        )
    return rows


# Ground stations of the two-site network study; real geodetic coordinates
# (their longitudes differ by ~143 degrees).
TOKYO = GroundSite("tokyo", 35.710, 139.486)
MADRID = GroundSite("madrid", 40.417, -3.703)
