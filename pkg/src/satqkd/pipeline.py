"""Scenario orchestration: pass selection, channel fit, full-chain runs.

This is the glue the command-line tool and the acceptance checks drive:
pick a pass from the scenario orbit, turn its geometry into a channel
profile (transmittance scaling with inverse footprint area and airmass
around the fitted reference point, Doppler delay from slant range, frame
angle from the configured profile), run the source/receiver chain, recover
the clock, sift and score the key.

All CSV emitters write ``#``-prefixed header lines (tool version, scenario
name and hash, seed) followed by one column-name row; bodies are formatted
deterministically so identical scenario+seed reruns are byte-identical.
A timestamp line is added only when explicitly requested.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import datetime, timedelta
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ScenarioError, SimulationError
from .keynet import altitude_sweep
from .linkbudget import airmass
from .orbit import PassWindow, doppler_shift, find_passes
from .polarization import FrameChain, predicted_rotation_angle
from .protocol import ReferenceKey, compute_qber, sift
from .receiver import ChannelProfile, ClickStream, run_pass
from .scenario import Scenario
from .source import Pn15Generator, encode_b92
from .sync import assign_stream, estimate_angle, recover_clock, window_port_counts

from . import orbit as _orbit


def _fmt(value) -> str:
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return format(value, ".10g")
    return str(value)


def write_csv(path, columns, rows, scenario: Scenario, stamp: bool = False) -> None:
    lines = [
        f"# satqkd {__version__}",
        f"# scenario: {scenario.name} sha256:{scenario.sha}",
        f"# seed: {scenario.seed}",
    ]
    if stamp:
        lines.append(f"# generated: {datetime.utcnow().isoformat()}")
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def select_pass(scenario: Scenario) -> PassWindow:
    """Pick the scenario's analysis pass: the ``index``-th pass over the
    configured site whose culmination falls inside the selection band."""
    if scenario.orbit is None:
        raise ScenarioError("scenario defines no [orbit] section")
    sel = scenario.pass_selection
    site = scenario.site(sel.site)
    t0 = scenario.orbit.epoch
    t1 = t0 + timedelta(days=sel.search_days)
    passes = find_passes(scenario.orbit, site, t0, t1, sel.min_elevation_deg)
    lo, hi = sel.select_max_elevation_deg
    matching = [p for p in passes if lo <= p.max_elevation_deg <= hi]
    if len(matching) <= sel.index:
        raise SimulationError(
            f"no pass over {site.name} with culmination in [{lo}, {hi}] deg "
            f"within {sel.search_days} days (found {len(matching)})"
        )
    return matching[sel.index]


@dataclass
class AnalysisSegment:
    """The simulated stretch of one pass, centered on culmination."""

    pass_window: PassWindow
    t_start: datetime
    duration_s: float
    times_s: np.ndarray       # seconds from segment start
    range_km: np.ndarray
    elevation_deg: np.ndarray


def analysis_segment(scenario: Scenario, pw: PassWindow) -> AnalysisSegment:
    t = np.array([(s.time - pw.rise).total_seconds() for s in pw.samples])
    el = np.array([s.elevation_deg for s in pw.samples])
    rng = np.array([s.slant_range_km for s in pw.samples])
    culm = t[int(np.argmax(el))]
    duration = min(scenario.channel.analysis_duration_s, pw.duration_s - 2.0)
    lo = culm - duration / 2.0
    if lo < 0:
        lo = 0.0
    hi = lo + duration
    if hi > t[-1]:
        hi = t[-1]
        lo = hi - duration
    grid = np.linspace(lo, hi, max(int(duration) + 1, 16))
    return AnalysisSegment(
        pass_window=pw,
        t_start=pw.rise + timedelta(seconds=float(lo)),
        duration_s=duration,
        times_s=grid - lo,
        range_km=np.interp(grid, t, rng),
        elevation_deg=np.interp(grid, t, el),
    )


def build_channel(scenario: Scenario, seg: AnalysisSegment) -> ChannelProfile:
    ch = scenario.channel
    # Transmittance relative to the fitted reference geometry: inverse
    # footprint area plus the airmass-scaled atmospheric term
    ref_airmass = airmass(ch.reference_elevation_deg)
    atm_db = ch.atm_zenith_db * (
        np.array([airmass(e) for e in seg.elevation_deg]) - ref_airmass
    )
    trans = ch.eta_chain * (ch.reference_distance_km / seg.range_km) ** 2
    trans = trans * 10.0 ** (-atm_db / 10.0)
    trans = np.clip(trans, 0.0, 1.0)

    if ch.angle_profile == "linear":
        angles = np.linspace(ch.angle_start_deg, ch.angle_end_deg, len(seg.times_s))
    elif ch.angle_profile == "constant":
        angles = np.full(len(seg.times_s), ch.angle_start_deg)
    else:  # geometry
        chain = FrameChain()
        site = scenario.site(scenario.pass_selection.site)
        angles = np.empty(len(seg.times_s))
        for i, dt in enumerate(seg.times_s):
            state = _orbit.propagate(scenario.orbit,
                                     seg.t_start + timedelta(seconds=float(dt)))
            angles[i] = predicted_rotation_angle(state, site, chain)
        angles = np.degrees(np.unwrap(np.radians(angles * 2.0))) / 2.0

    return ChannelProfile.from_range_profile(
        seg.times_s, seg.range_km, trans, angles
    )


@dataclass
class SimulationResult:
    scenario: Scenario
    segment: AnalysisSegment
    channel: ChannelProfile
    clicks: ClickStream
    estimates: list
    window_counts: np.ndarray
    angles_deg: np.ndarray
    reference: ReferenceKey
    qber_report: object
    sifted_len: int

    def summary_lines(self) -> list[str]:
        pw = self.segment.pass_window
        offsets = [e.offset_hz for e in self.estimates]
        q = self.qber_report
        lines = [
            f"pass rise {pw.rise.isoformat()} set {pw.set.isoformat()} "
            f"max elevation {pw.max_elevation_deg:.1f} deg",
            f"analysis segment {self.segment.duration_s:.0f} s from "
            f"{self.segment.t_start.isoformat()}",
            f"clicks {len(self.clicks)} in {len(self.estimates)} windows",
            f"clock offset range [{min(offsets):.1f}, {max(offsets):.1f}] Hz",
            f"sifted bits {self.sifted_len}",
            f"minimum window QBER {q.min_qber():.4f}",
        ]
        rates = [w.sifted_rate_bit_s for w in q.windows if not math.isnan(w.qber)]
        if rates:
            best = min((w for w in q.windows if not math.isnan(w.qber)),
                       key=lambda w: w.qber)
            lines.append(
                f"sifted rate at minimum-QBER window {best.sifted_rate_bit_s:.0f} bit/s"
            )
        return lines


def run_simulation(scenario: Scenario) -> SimulationResult:
    """Full chain on the scenario's selected pass."""
    pw = select_pass(scenario)
    seg = analysis_segment(scenario, pw)
    channel = build_channel(scenario, seg)

    gen = Pn15Generator(seed=scenario.source.pn15_seed)
    frame = encode_b92(
        gen,
        clock_hz=scenario.source.clock_hz,
        duration_s=seg.duration_s,
        mean_photons=scenario.source.mean_photons,
    )
    reference = ReferenceKey.from_frame(frame)

    rng = np.random.default_rng(np.random.SeedSequence(scenario.seed))
    clicks = run_pass(frame, channel, scenario.receiver, rng)

    estimates = recover_clock(
        clicks,
        scenario.source.clock_hz,
        scenario.sync.window_s,
        search_hz=scenario.sync.search_hz,
        min_clicks=scenario.sync.min_clicks,
    )
    assignment = assign_stream(clicks, estimates, scenario.sync.gate_ps)
    counts = window_port_counts(clicks, estimates, assignment)
    angles = np.array([
        estimate_angle(c) if c[:2].sum() > 0 and c[2:].sum() > 0 else math.nan
        for c in counts
    ])

    sifted = sift(assignment, clicks, reference=reference, duration_s=seg.duration_s)
    report = compute_qber(
        sifted, reference, scenario.protocol.window_s,
        min_conclusive=scenario.protocol.min_conclusive,
    )
    return SimulationResult(
        scenario=scenario,
        segment=seg,
        channel=channel,
        clicks=clicks,
        estimates=estimates,
        window_counts=counts,
        angles_deg=angles,
        reference=reference,
        qber_report=report,
        sifted_len=len(sifted),
    )


def sync_window_rows(result: SimulationResult) -> list[tuple]:
    rows = []
    for est, counts, angle in zip(result.estimates, result.window_counts,
                                  result.angles_deg):
        rows.append((
            est.t_start_s, est.offset_hz, est.clock.drift_hz_per_s, angle,
            int(counts[0]), int(counts[1]), int(counts[2]), int(counts[3]),
        ))
    return rows


SYNC_COLUMNS = ("t_start_s", "offset_hz", "drift_hz_s", "angle_deg",
                "counts_H", "counts_V", "counts_D", "counts_A")
QBER_COLUMNS = ("t_start_s", "qber", "sifted_rate_bit_s", "conclusive_count")
PASS_COLUMNS = ("time_utc", "elevation_deg", "azimuth_deg",
                "slant_range_km", "radial_velocity_km_s")
ANGLE_COLUMNS = ("time_utc", "predicted_angle_deg")
SWEEP_COLUMNS = ("altitude_km", "total_key_time_s", "mean_time_between_ogs_s",
                 "mean_session_s", "n_distributions")


def doppler_profile(result: SimulationResult, f_clock_hz: float) -> np.ndarray:
    """Geometric clock offset at each sync window center (for comparison
    with the recovered offsets)."""
    seg = result.segment
    pw = seg.pass_window
    t_pass = np.array([(s.time - pw.rise).total_seconds() for s in pw.samples])
    vr = np.array([s.radial_velocity_km_s for s in pw.samples])
    seg_off = (seg.t_start - pw.rise).total_seconds()
    out = []
    for est in result.estimates:
        v = np.interp(seg_off + est.t_center_s, t_pass, vr)
        out.append(doppler_shift(f_clock_hz, float(v)))
    return np.array(out)


def run_network_sweep(scenario: Scenario) -> list:
    net = scenario.network
    site_a = scenario.site(net.sites[0])
    site_b = scenario.site(net.sites[1])
    return altitude_sweep(
        net.altitudes_km, site_a, site_b, net.year,
        net.min_elevation_deg, net.rate_bit_s, days=net.days,
    )
