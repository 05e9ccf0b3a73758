"""B92 sifting, QBER against the transmitted key, and key-rate estimation.

Sifting keeps only the two unambiguous ports: a V click identifies the
45-degree state (key bit 0, which has zero amplitude at V only for the
0-degree state) and an A click identifies the 0-degree state (key bit 1).
H and D clicks are inconclusive and dropped.  Slots holding both V and A
clicks are contradictory; the default policy discards them (a documented
"first click wins" alternative keeps the earliest conclusive click).

The transmitted key is reconstructed from the periodic chip pattern of the
source, so a reference covers arbitrarily long frames without storing one
bit per slot; both parties know the slot pattern, and conclusive clicks in
slots that carried no pulse are background by construction and excluded
from the key comparison.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ProtocolError
from .receiver import PORT_A, PORT_V, ClickStream
from .source import TxFrame
from .sync import SlotAssignment


@dataclass
class ReferenceKey:
    """Slot-indexed transmitted key derived from the periodic chip pattern."""

    chips: np.ndarray
    clock_hz: float
    seed: int = 0
    taps: tuple[int, ...] = ()

    def __post_init__(self):
        self.chips = np.asarray(self.chips, dtype=np.int8)
        if len(self.chips) < 2:
            raise ProtocolError("reference chip pattern too short")

    @property
    def period(self) -> int:
        return len(self.chips)

    def has_pulse(self, slots) -> np.ndarray:
        slots = np.asarray(slots, dtype=np.int64)
        if np.any(slots < 0):
            raise ProtocolError("reference does not cover negative slot indices")
        return self.chips[slots % self.period] != self.chips[(slots - 1) % self.period]

    def key_bits(self, slots) -> np.ndarray:
        slots = np.asarray(slots, dtype=np.int64)
        return self.chips[slots % self.period]

    @staticmethod
    def from_frame(frame: TxFrame) -> "ReferenceKey":
        return ReferenceKey(frame.chips, frame.clock_hz, frame.seed, frame.taps)

    def save(self, path) -> None:
        lines = [
            "PN15KEY schema=1",
            f"clock_hz={self.clock_hz!r}",
            f"seed={self.seed}",
            f"taps={','.join(str(t) for t in self.taps)}",
            "chips=" + "".join(str(int(c)) for c in self.chips),
            "",
        ]
        Path(path).write_text("\n".join(lines), encoding="ascii")

    @staticmethod
    def load(path) -> "ReferenceKey":
        text = Path(path).read_text(encoding="ascii").splitlines()
        if not text or not text[0].startswith("PN15KEY"):
            raise ProtocolError(f"not a PN15KEY reference file: {path}")
        fields = {}
        for line in text[1:]:
            if "=" in line:
                k, v = line.split("=", 1)
                fields[k] = v
        chips = np.frombuffer(fields["chips"].encode("ascii"), dtype=np.uint8) - ord("0")
        taps = tuple(int(t) for t in fields["taps"].split(",") if t)
        return ReferenceKey(chips.astype(np.int8), float(fields["clock_hz"]),
                            int(fields["seed"]), taps)


@dataclass
class SiftedKey:
    """Raw key after sifting: bit per conclusive slot, slots strictly rising."""

    bits: np.ndarray
    slot_indices: np.ndarray
    duration_s: float
    clock_hz: float

    def __post_init__(self):
        self.bits = np.asarray(self.bits, dtype=np.int8)
        self.slot_indices = np.asarray(self.slot_indices, dtype=np.int64)
        if self.bits.shape != self.slot_indices.shape:
            raise ProtocolError("bits and slot indices must align")
        if len(self.slot_indices) > 1 and np.any(np.diff(self.slot_indices) <= 0):
            raise ProtocolError("slot indices must be strictly increasing")
        if self.duration_s <= 0:
            raise ProtocolError("duration must be positive")

    def __len__(self) -> int:
        return len(self.bits)


def sift(
    assignment: SlotAssignment,
    clicks: ClickStream,
    *,
    reference: ReferenceKey | None = None,
    duration_s: float | None = None,
    policy: str = "discard",
) -> SiftedKey:
    """Turn gate-accepted clicks into the sifted key.

    Args:
        reference: when given, conclusive clicks in slots that carried no
            transmitted pulse are dropped (both parties know the pattern).
        duration_s: observation time for rate bookkeeping; defaults to the
            slot span of the assignment.
        policy: contradictory-slot handling, "discard" (default) or
            "first" (earliest conclusive click wins).
    """
    if policy not in ("discard", "first"):
        raise ValueError(f"unknown multi-click policy {policy!r}")
    idx, slots = assignment.accepted_items()
    ports = clicks.port[idx]
    tags = clicks.tag_ps[idx]

    conclusive = (ports == PORT_V) | (ports == PORT_A)
    slots = slots[conclusive]
    bits = np.where(ports[conclusive] == PORT_V, 0, 1).astype(np.int8)
    tags = tags[conclusive]

    if reference is not None and len(slots):
        on_pulse = reference.has_pulse(slots)
        slots, bits, tags = slots[on_pulse], bits[on_pulse], tags[on_pulse]

    if duration_s is None:
        if len(assignment) and assignment.clock_hz > 0:
            span = assignment.slot.max() - assignment.slot.min() + 1
            duration_s = span / assignment.clock_hz
        else:
            duration_s = 1.0

    if len(slots) == 0:
        return SiftedKey(np.empty(0, np.int8), np.empty(0, np.int64),
                         duration_s, assignment.clock_hz)

    order = np.lexsort((tags, slots))
    slots, bits = slots[order], bits[order]
    uniq, start, counts = np.unique(slots, return_index=True, return_counts=True)
    first_bits = bits[start]
    if policy == "discard":
        # a slot is contradictory when both V and A appear in it
        sums = np.add.reduceat(bits, start)
        pure = (sums == 0) | (sums == counts)
        uniq, first_bits = uniq[pure], first_bits[pure]
    return SiftedKey(first_bits, uniq, duration_s, assignment.clock_hz)


@dataclass(frozen=True)
class QberWindow:
    t_start_s: float
    qber: float  # NaN when below the conclusive-count floor
    sifted_rate_bit_s: float
    conclusive_count: int


@dataclass
class QberReport:
    windows: list[QberWindow]

    def min_qber(self) -> float:
        vals = [w.qber for w in self.windows if not math.isnan(w.qber)]
        if not vals:
            return math.nan
        return min(vals)

    def overall_qber(self) -> float:
        n = sum(w.conclusive_count for w in self.windows)
        if n == 0:
            return math.nan
        errs = sum(w.qber * w.conclusive_count for w in self.windows
                   if not math.isnan(w.qber))
        return errs / n

    def csv_rows(self) -> list[tuple]:
        return [
            (w.t_start_s, w.qber, w.sifted_rate_bit_s, w.conclusive_count)
            for w in self.windows
        ]


def compute_qber(
    sifted: SiftedKey,
    reference: ReferenceKey,
    window_s: float = 1.0,
    *,
    min_conclusive: int = 100,
    t0_s: float = 0.0,
) -> QberReport:
    """Windowed mismatch fraction of the sifted key against the reference.

    Windows share the sync-recovery timeline: window i covers slot times
    [t0 + i*w, t0 + (i+1)*w).  Windows under ``min_conclusive`` bits report
    NaN QBER but keep their counts.

    Raises:
        ProtocolError: when a sifted slot is not covered by the reference
            (negative index or no transmitted pulse there).
    """
    if len(sifted) == 0:
        return QberReport([])
    if np.any(~reference.has_pulse(sifted.slot_indices)):
        raise ProtocolError("sifted key contains slots without transmitted pulses")
    truth = reference.key_bits(sifted.slot_indices)
    errors = (sifted.bits != truth).astype(np.int64)

    t_slot = sifted.slot_indices / sifted.clock_hz
    w_idx = np.floor((t_slot - t0_s) / window_s).astype(np.int64)
    n_windows = int(w_idx.max()) + 1
    windows = []
    for w in range(n_windows):
        m = w_idx == w
        n = int(m.sum())
        rate = n / window_s
        if n >= min_conclusive:
            qber = float(errors[m].sum()) / n
        else:
            qber = math.nan
        windows.append(QberWindow(t0_s + w * window_s, qber, rate, n))
    return QberReport(windows)


def key_rate(sifted: SiftedKey) -> float:
    """Sifted bits per second over the observation duration."""
    return len(sifted) / sifted.duration_s
