"""Transmitted quantum signal: PN15 sequence, edge-triggered key encoding.

The key encoding works on the chip waveform of a maximal-length 15-bit
sequence clocked at ``clock_hz`` (10 MHz by default).  Each chip-to-chip
transition of the waveform emits one pulse: a rising edge encodes key bit 1
on the 0-degree laser, a falling edge encodes key bit 0 on the 45-degree
laser.  A maximal-length period of 32767 chips contains 16384 transitions
(8192 rising and 8192 falling), so the key rate is clock * 16384/32767
(~5 MHz at a 10 MHz clock) and each laser fires at half of that.

The chip waveform is treated as periodic in both directions, so whether
slot 0 carries a pulse is decided by comparing against the final chip of
the period.  Frames are kept compact: pulses are materialized lazily, and
long passes are consumed through the slot-indexed accessors
(:meth:`TxFrame.pulse_count`, :meth:`TxFrame.pulse_slots`) instead.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

PN15_PERIOD = 32767

# Angle encoding: bit 1 -> 0 degrees, bit 0 -> 45 degrees
BIT_ANGLES_DEG = {1: 0.0, 0: 45.0}

_MAX_MATERIALIZED_SLOTS = 100_000_000


class Pn15Generator:
    """Fibonacci LFSR for the 15-bit maximal-length sequence.

    The default feedback polynomial is x^15 + x^14 + 1 expressed by its tap
    positions ``(15, 14)``; any pair/tuple of tap positions can be supplied
    to override it.  The register must never be all-zero.
    """

    def __init__(self, seed: int = 0x7FFF, taps: tuple[int, ...] = (15, 14)):
        if not 0 < seed < (1 << 15):
            raise ValueError("seed must be a non-zero 15-bit value")
        if any(not 1 <= t <= 15 for t in taps):
            raise ValueError("tap positions must lie in 1..15")
        self.seed = seed
        self.taps = tuple(sorted(taps, reverse=True))
        self._state = seed

    @property
    def state(self) -> int:
        return self._state

    def next_bit(self) -> int:
        """Advance the register one step and return the output chip."""
        if self._state == 0:
            raise ValueError("LFSR register reached the all-zero state")
        out = self._state & 1
        fb = 0
        for t in self.taps:
            fb ^= (self._state >> (15 - t)) & 1
        self._state = (self._state >> 1) | (fb << 14)
        return out

    def bits(self, n: int) -> np.ndarray:
        """Next ``n`` chips as an int8 array."""
        out = np.empty(n, dtype=np.int8)
        for i in range(n):
            out[i] = self.next_bit()
        return out

    def period_chips(self) -> np.ndarray:
        """One full period of the sequence from the current state (the state
        is restored afterwards)."""
        saved = self._state
        chips = self.bits(PN15_PERIOD)
        self._state = saved
        return chips


def pn15_next(gen: Pn15Generator) -> int:
    """Next chip of the sequence (thin wrapper over the generator)."""
    return gen.next_bit()


class PulseEvent(NamedTuple):
    slot_index: int
    emit_time_ps: int
    key_bit: int
    angle_deg: float
    mean_photons: float


@dataclass
class TxFrame:
    """One transmitted frame: clock, duration and the periodic chip pattern.

    ``chips`` holds one period of the underlying sequence; all slot-indexed
    queries treat it as periodic.  ``pulses``/``key_bits`` materialize the
    whole frame and are intended for short frames (tests, CSV export); use
    the count/sampling accessors for pass-length frames.
    """

    clock_hz: float
    duration_s: float
    mean_photons: float
    chips: np.ndarray
    seed: int = 0x7FFF
    taps: tuple[int, ...] = (15, 14)
    _pulse_cache: tuple | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.clock_hz <= 0 or self.duration_s <= 0:
            raise ValueError("clock and duration must be positive")
        if self.mean_photons < 0:
            raise ValueError("mean photon number must be non-negative")
        self.chips = np.asarray(self.chips, dtype=np.int8)

    @property
    def n_slots(self) -> int:
        return int(round(self.duration_s * self.clock_hz))

    @property
    def slot_ps(self) -> float:
        return 1e12 / self.clock_hz

    @property
    def period(self) -> int:
        return len(self.chips)

    def _edge_positions(self) -> tuple[np.ndarray, np.ndarray]:
        """Sorted in-period slot positions of rising (bit 1) and falling
        (bit 0) transitions of the periodic chip waveform."""
        c = self.chips
        prev = np.roll(c, 1)
        rising = np.flatnonzero((prev == 0) & (c == 1))
        falling = np.flatnonzero((prev == 1) & (c == 0))
        return rising, falling

    def _positions(self, bit: int) -> np.ndarray:
        rising, falling = self._edge_positions()
        return rising if bit == 1 else falling

    def chip_at(self, slots: np.ndarray) -> np.ndarray:
        return self.chips[np.asarray(slots) % self.period]

    def has_pulse(self, slots: np.ndarray) -> np.ndarray:
        slots = np.asarray(slots)
        return self.chip_at(slots) != self.chip_at(slots - 1)

    def key_bit_at(self, slots: np.ndarray) -> np.ndarray:
        """Key bit of the pulse at each slot (meaningful where has_pulse)."""
        return self.chip_at(slots)

    def pulse_count(self, slot_lo: int, slot_hi: int, bit: int) -> int:
        """Number of bit-``bit`` pulses with slot index in [slot_lo, slot_hi)."""
        pos = self._positions(bit)

        def cum(x: int) -> int:
            p, r = divmod(x, self.period)
            return p * len(pos) + int(np.searchsorted(pos, r))

        return cum(slot_hi) - cum(slot_lo)

    def pulse_slots(self, slot_lo: int, ordinals: np.ndarray, bit: int) -> np.ndarray:
        """Slot indices of the ``ordinals``-th bit-``bit`` pulses counted from
        ``slot_lo`` (vectorized; ordinals may repeat)."""
        pos = self._positions(bit)
        p0, r0 = divmod(slot_lo, self.period)
        base = p0 * len(pos) + int(np.searchsorted(pos, r0))
        p, r = np.divmod(base + np.asarray(ordinals, dtype=np.int64), len(pos))
        return p * self.period + pos[r]

    def _materialize(self):
        if self._pulse_cache is not None:
            return self._pulse_cache
        if self.n_slots > _MAX_MATERIALIZED_SLOTS:
            raise MemoryError(
                f"frame of {self.n_slots} slots is too long to materialize; "
                "use the slot-indexed accessors"
            )
        slots = np.arange(self.n_slots, dtype=np.int64)
        mask = self.has_pulse(slots)
        slots = slots[mask]
        bits = self.key_bit_at(slots)
        self._pulse_cache = (slots, bits)
        return self._pulse_cache

    def pulse_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """(slot indices, key bits) of every pulse in the frame."""
        return self._materialize()

    @property
    def key_bits(self) -> np.ndarray:
        return self._materialize()[1]

    @property
    def pulses(self) -> list[PulseEvent]:
        slots, bits = self._materialize()
        slot_ps = self.slot_ps
        return [
            PulseEvent(int(s), int(round(s * slot_ps)), int(b),
                       BIT_ANGLES_DEG[int(b)], self.mean_photons)
            for s, b in zip(slots, bits)
        ]

    def csv_rows(self) -> list[tuple[int, int, int, float]]:
        """Rows (slot_index, emit_time_ps, key_bit, angle_deg)."""
        return [(p.slot_index, p.emit_time_ps, p.key_bit, p.angle_deg) for p in self.pulses]


def encode_b92(
    gen: Pn15Generator,
    clock_hz: float = 10e6,
    duration_s: float = 1.0,
    mean_photons: float = 0.6,
    chips: np.ndarray | None = None,
) -> TxFrame:
    """Build a transmitted frame from the generator's periodic chip pattern.

    ``chips`` overrides the pattern (any periodic int 0/1 array), which is
    how degenerate inputs (constant sequences emitting no pulses) and
    alternative codes are injected.
    """
    if chips is None:
        chips = gen.period_chips()
    return TxFrame(
        clock_hz=clock_hz,
        duration_s=duration_s,
        mean_photons=mean_photons,
        chips=np.asarray(chips, dtype=np.int8),
        seed=gen.seed,
        taps=gen.taps,
    )


def sample_photon_count(mean_photons: float, rng: np.random.Generator) -> int:
    """Poisson photon number for one pulse."""
    if mean_photons < 0:
        raise ValueError("mean photon number must be non-negative")
    return int(rng.poisson(mean_photons))
