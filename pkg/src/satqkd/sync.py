"""Modulation-clock recovery from click tags and slot assignment.

The transmitter clock arrives Doppler-shifted and drifting.  Per analysis
window the frequency offset is found by maximizing the magnitude of the
complex phasor sum over click phases, S(f) = |sum_k exp(2*pi*i*f*t_k)|,
evaluated efficiently by demodulating at the nominal frequency, binning the
residual phasors in time and reading the offset band off an FFT; the peak
is refined by parabolic interpolation plus an exact re-evaluation of the
phasor sum.  Drift comes from a sliding linear fit across window offsets,
and the slot phase is anchored per window by the circular mean of the
fractional slot phases, chained window-to-window so the integer slot
numbering stays continuous over a whole pass.

Angle estimation per window uses calibrated port counts:
theta = 1/2 * atan2((D-A)/(D+A), (H-V)/(H+V)).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EstimationError
from .polarization import normalize_angle_deg
from .receiver import ClickStream

_BIN_S = 1e-4  # residual-phasor binning; keeps offset*bin << 1 cycle


@dataclass(frozen=True)
class ClockModel:
    """Recovered clock, valid around one analysis window.

    ``phase_ps`` is the absolute tag time of the center of slot
    ``slot_base``; ``offset_hz`` and ``drift_hz_per_s`` describe the
    instantaneous frequency at that phase point, so the accumulated slot
    phase at tag time t is

        slot_base + (f_nominal + offset) * tau + drift/2 * tau^2,
        tau = t - phase_ps * 1e-12.
    """

    f_nominal_hz: float
    offset_hz: float
    drift_hz_per_s: float
    phase_ps: int
    slot_base: int = 0

    def slot_phase(self, t_s) -> np.ndarray:
        tau = np.asarray(t_s, dtype=float) - self.phase_ps * 1e-12
        f = self.f_nominal_hz + self.offset_hz
        return self.slot_base + f * tau + 0.5 * self.drift_hz_per_s * tau**2

    def instantaneous_hz(self, t_s: float) -> float:
        tau = t_s - self.phase_ps * 1e-12
        return self.f_nominal_hz + self.offset_hz + self.drift_hz_per_s * tau


@dataclass(frozen=True)
class WindowEstimate:
    """Per-window recovery result; ``offset_hz`` is the frequency offset at
    the window center (the phasor-peak estimate)."""

    index: int
    t_start_s: float
    t_end_s: float
    n_clicks: int
    offset_hz: float
    clock: ClockModel

    @property
    def t_center_s(self) -> float:
        return 0.5 * (self.t_start_s + self.t_end_s)


@dataclass
class SlotAssignment:
    """Click-to-slot mapping; ``accepted`` marks residuals inside the gate."""

    click_index: np.ndarray  # indices into the source stream
    slot: np.ndarray         # int64 slot index per click
    residual_ps: np.ndarray  # signed residual from slot center
    accepted: np.ndarray     # bool
    clock_hz: float

    def __len__(self) -> int:
        return len(self.click_index)

    @property
    def n_accepted(self) -> int:
        return int(self.accepted.sum())

    def accepted_items(self) -> tuple[np.ndarray, np.ndarray]:
        return self.click_index[self.accepted], self.slot[self.accepted]


def _circular_mean_cycles(frac: np.ndarray) -> float:
    """Mean of phases given in cycles, returned in (-0.5, 0.5]."""
    ang = 2.0 * math.pi * frac
    return math.atan2(np.sin(ang).mean(), np.cos(ang).mean()) / (2.0 * math.pi)


def _phasor_magnitude(frac_phase: np.ndarray, tau: np.ndarray, df: float) -> float:
    ang = 2.0 * math.pi * (frac_phase + df * tau)
    return abs(np.exp(1j * ang).sum())


def _estimate_offset(tau: np.ndarray, f_nominal_hz: float, search_hz: float) -> float:
    """Offset (Hz) of the strongest clock tone near f_nominal.

    ``tau`` is click time relative to the window center, which keeps the
    drift-induced smear symmetric about the estimate.
    """
    frac = (f_nominal_hz * tau) % 1.0
    phasor = np.exp(2j * math.pi * frac)

    t0 = tau.min()
    n_bins = max(int(math.ceil((tau.max() - t0) / _BIN_S)), 1)
    idx = np.minimum(((tau - t0) / _BIN_S).astype(np.int64), n_bins - 1)
    binned = np.zeros(n_bins, dtype=complex)
    np.add.at(binned, idx, phasor)

    n_fft = 1 << max(int(math.ceil(math.log2(4 * n_bins))), 4)
    spectrum = np.fft.ifft(binned, n_fft) * n_fft  # sum b_m e^{+2pi i f m dt}
    freqs = np.fft.fftfreq(n_fft, _BIN_S)
    band = np.abs(freqs) <= search_hz
    mag2 = np.abs(spectrum) ** 2
    mag2[~band] = 0.0
    k = int(np.argmax(mag2))
    step = freqs[1] - freqs[0]
    km, kp = (k - 1) % n_fft, (k + 1) % n_fft
    denom = mag2[km] - 2.0 * mag2[k] + mag2[kp]
    shift = 0.0 if denom == 0 else 0.5 * (mag2[km] - mag2[kp]) / denom
    df = float(freqs[k] + shift * step)

    # Exact refinement: parabolic fit on the true phasor magnitude
    h = max(abs(step), 1e-3)
    m = np.array([_phasor_magnitude(frac, tau, df + d) ** 2 for d in (-h, 0.0, h)])
    denom = m[0] - 2.0 * m[1] + m[2]
    if denom != 0:
        df += 0.5 * (m[0] - m[2]) / denom * h
    return df


def recover_clock(
    clicks: ClickStream,
    f_nominal_hz: float,
    window_s: float = 1.0,
    *,
    search_hz: float = 300.0,
    min_clicks: int = 1000,
    drift_fit_windows: int = 5,
    t0_s: float = 0.0,
) -> list[WindowEstimate]:
    """Recover the clock per analysis window of ``window_s`` seconds.

    Windows start at ``t0_s`` on the tag timeline; a trailing partial window
    is dropped.  Offsets are clamped-checked against ``search_hz``; drift is
    a sliding least-squares slope over ``drift_fit_windows`` window centers
    (zero when fewer than two windows exist).

    Raises:
        EstimationError: when a window holds fewer than ``min_clicks`` clicks
            (the exception carries the window index).
    """
    if len(clicks) == 0:
        raise EstimationError("empty click stream", window_index=0)
    t = clicks.tag_ps * 1e-12
    t_end = t[-1]
    n_windows = int((t_end - t0_s) / window_s)
    if n_windows < 1:
        raise EstimationError("stream shorter than one analysis window", window_index=0)

    starts = t0_s + window_s * np.arange(n_windows)
    lo_idx = np.searchsorted(t, starts)
    hi_idx = np.searchsorted(t, starts + window_s)

    # Pass 1: per-window offset at the window center
    offsets = np.empty(n_windows)
    counts = np.empty(n_windows, dtype=np.int64)
    for w in range(n_windows):
        sel = slice(lo_idx[w], hi_idx[w])
        counts[w] = hi_idx[w] - lo_idx[w]
        if counts[w] < min_clicks:
            raise EstimationError(
                f"window {w} has {counts[w]} clicks (< {min_clicks})", window_index=w
            )
        center = starts[w] + 0.5 * window_s
        offsets[w] = _estimate_offset(t[sel] - center, f_nominal_hz, search_hz)

    # Pass 2: sliding linear drift fit across window-center offsets
    centers = starts + 0.5 * window_s
    drifts = np.zeros(n_windows)
    half = drift_fit_windows // 2
    for w in range(n_windows):
        lo = max(0, w - half)
        hi = min(n_windows, lo + drift_fit_windows)
        lo = max(0, hi - drift_fit_windows)
        if hi - lo >= 2:
            drifts[w] = np.polyfit(centers[lo:hi], offsets[lo:hi], 1)[0]

    # Pass 3: sequential phase anchoring (keeps slot numbering continuous)
    estimates: list[WindowEstimate] = []
    prev: ClockModel | None = None
    for w in range(n_windows):
        sel = slice(lo_idx[w], hi_idx[w])
        t_s = starts[w]
        f_start = f_nominal_hz + offsets[w] - drifts[w] * 0.5 * window_s
        base_phase = 0.0 if prev is None else float(prev.slot_phase(t_s))
        tau = t[sel] - t_s
        phi = base_phase + f_start * tau + 0.5 * drifts[w] * tau**2
        delta = _circular_mean_cycles(phi % 1.0)
        anchored = base_phase - delta
        m0 = round(anchored)
        q = m0 - anchored
        x = 2.0 * q / (f_start + math.sqrt(f_start**2 + 2.0 * drifts[w] * q))
        model = ClockModel(
            f_nominal_hz=f_nominal_hz,
            offset_hz=f_start + drifts[w] * x - f_nominal_hz,
            drift_hz_per_s=drifts[w],
            phase_ps=int(round((t_s + x) * 1e12)),
            slot_base=int(m0),
        )
        estimates.append(
            WindowEstimate(w, t_s, t_s + window_s, int(counts[w]), float(offsets[w]), model)
        )
        prev = model
    return estimates


def assign_slots(
    clicks: ClickStream,
    clock: ClockModel,
    gate_ps: int,
    *,
    click_index: np.ndarray | None = None,
) -> SlotAssignment:
    """Map clicks to nearest slot centers under the recovered clock.

    Clicks whose residual exceeds ``gate_ps`` are marked rejected.
    ``click_index`` restricts the mapping to a subset of the stream.
    """
    slot_ps = 1e12 / clock.f_nominal_hz
    if gate_ps > 0.5 * slot_ps:
        raise ValueError(f"gate {gate_ps} ps exceeds half a slot ({0.5 * slot_ps} ps)")
    if click_index is None:
        click_index = np.arange(len(clicks), dtype=np.int64)
    t = clicks.tag_ps[click_index] * 1e-12
    phase = clock.slot_phase(t)
    slot = np.round(phase).astype(np.int64)
    tau = t - clock.phase_ps * 1e-12
    f_inst = clock.f_nominal_hz + clock.offset_hz + clock.drift_hz_per_s * tau
    residual = np.round((phase - slot) / f_inst * 1e12).astype(np.int64)
    accepted = np.abs(residual) <= gate_ps
    return SlotAssignment(click_index, slot, residual, accepted, clock.f_nominal_hz)


def assign_stream(
    clicks: ClickStream, estimates: list[WindowEstimate], gate_ps: int
) -> SlotAssignment:
    """Assign every click covered by the window estimates, window by window."""
    if not estimates:
        raise EstimationError("no window estimates to assign against")
    t = clicks.tag_ps * 1e-12
    parts = []
    for est in estimates:
        lo = np.searchsorted(t, est.t_start_s)
        hi = np.searchsorted(t, est.t_end_s)
        if hi > lo:
            parts.append(
                assign_slots(clicks, est.clock, gate_ps,
                             click_index=np.arange(lo, hi, dtype=np.int64))
            )
    if not parts:
        raise EstimationError("no clicks inside the estimated windows")
    return SlotAssignment(
        np.concatenate([p.click_index for p in parts]),
        np.concatenate([p.slot for p in parts]),
        np.concatenate([p.residual_ps for p in parts]),
        np.concatenate([p.accepted for p in parts]),
        estimates[0].clock.f_nominal_hz,
    )


def estimate_angle(window_counts, weights=None) -> float:
    """Polarization angle from calibrated per-port counts (H, V, D, A).

    Raises:
        EstimationError: when either basis has zero total counts.
    """
    c = np.asarray(window_counts, dtype=float)
    if c.shape != (4,):
        raise ValueError("expected four port counts")
    if weights is not None:
        c = c * np.asarray(weights, dtype=float)
    h, v, d, a = c
    if h + v <= 0 or d + a <= 0:
        raise EstimationError("empty analyzer basis in angle estimation")
    s1 = (h - v) / (h + v)
    s2 = (d - a) / (d + a)
    return normalize_angle_deg(math.degrees(0.5 * math.atan2(s2, s1)))


def window_port_counts(
    clicks: ClickStream,
    estimates: list[WindowEstimate],
    assignment: SlotAssignment | None = None,
) -> np.ndarray:
    """Accepted-click counts per window and port, shape (n_windows, 4).

    Without an assignment, raw counts per window are used.
    """
    t = clicks.tag_ps * 1e-12
    out = np.zeros((len(estimates), 4), dtype=np.int64)
    if assignment is None:
        sel_idx = np.arange(len(clicks))
        sel_t = t
        ports = clicks.port
    else:
        sel_idx = assignment.click_index[assignment.accepted]
        sel_t = t[sel_idx]
        ports = clicks.port[sel_idx]
    for w, est in enumerate(estimates):
        m = (sel_t >= est.t_start_s) & (sel_t < est.t_end_s)
        out[w] = np.bincount(ports[m], minlength=4)[:4]
    return out
