"""Command-line entry point: scenario-driven subcommands with CSV outputs.

Subcommands: ``linkbudget``, ``passes``, ``polangle``, ``simulate``,
``qber``, ``network-sweep``.  Every subcommand runs standalone from a
scenario file; outputs carry the tool version, the scenario hash and the
seed in their headers and are byte-identical across reruns of the same
scenario and seed (pass ``--stamp`` to add a timestamp header line).

Exit codes: 0 success, 2 configuration error (bad scenario file, unknown
config or key), 3 runtime error.
"""
from __future__ import annotations

import argparse
import math
import sys
from dataclasses import replace
from datetime import timedelta
from pathlib import Path

import numpy as np

from . import __version__
from . import pipeline as pl
from .errors import ScenarioError, SimulationError
from .linkbudget import REFERENCE_CONFIGS, REFERENCE_GEOMETRY, compute_budget
from .orbit import find_passes, pass_samples_csv_rows, propagate
from .polarization import FrameChain, predicted_rotation_angle
from .protocol import ReferenceKey, compute_qber, sift
from .receiver import ClickStream
from .scenario import Scenario, load_scenario
from .sync import assign_stream, recover_clock

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="satqkd",
        description="satellite-to-ground B92 key distribution simulator",
    )
    parser.add_argument("--version", action="version", version=f"satqkd {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--scenario", required=True, help="scenario file path")
        p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--stamp", action="store_true",
                       help="add a timestamp header line to outputs")
        return p

    p = common(sub.add_parser("linkbudget", help="print a dB ledger"))
    p.add_argument("--config", default=None,
                   help="budget config name (overrides the scenario's)")
    p.add_argument("--distance-km", type=float, default=None)
    p.add_argument("--elevation-deg", type=float, default=None)
    p.add_argument("--csv", default=None, help="also write label,value_db CSV here")

    common(sub.add_parser("passes", help="find passes and export geometry samples"))
    common(sub.add_parser("polangle", help="predicted polarization angle along the pass"))
    p = common(sub.add_parser("simulate", help="full B92 chain on the selected pass"))
    p.add_argument("--save-raw", action="store_true",
                   help="also write the time-tag stream and reference key files")
    p = common(sub.add_parser("qber", help="recompute QBER from saved raw files"))
    p.add_argument("--ttag", required=True, help="TTAG1 time-tag file")
    p.add_argument("--reference", required=True, help="PN15KEY reference file")
    common(sub.add_parser("network-sweep", help="one-year altitude study"))
    return parser


def _load(args) -> Scenario:
    scn = load_scenario(args.scenario)
    if args.seed is not None:
        scn.seed = args.seed
    return scn


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _cmd_linkbudget(args) -> int:
    scn = _load(args)
    if args.config is not None:
        if args.config not in REFERENCE_CONFIGS:
            raise ScenarioError(
                f"unknown budget config {args.config!r}; available: "
                f"{sorted(REFERENCE_CONFIGS)}"
            )
        config = REFERENCE_CONFIGS[args.config]
    elif scn.budget_config is not None:
        config = scn.budget_config
    else:
        raise ScenarioError("no budget config: pass --config or add a [budget] section")
    d, el = REFERENCE_GEOMETRY.get(config.name, (1000.0, 35.0))
    if args.distance_km is not None:
        d = args.distance_km
    if args.elevation_deg is not None:
        el = args.elevation_deg
    ledger = compute_budget(config, d, el)
    print(f"{config.name} at {d:.0f} km, elevation {el:.0f} deg")
    print(ledger.format_text())
    if args.csv:
        pl.write_csv(Path(args.csv), ("label", "value_db"), ledger.csv_rows(),
                     scn, stamp=args.stamp)
    return EXIT_OK


def _cmd_passes(args) -> int:
    scn = _load(args)
    if scn.orbit is None:
        raise ScenarioError("scenario defines no [orbit] section")
    sel = scn.pass_selection
    site = scn.site(sel.site)
    t1 = scn.orbit.epoch + timedelta(days=sel.search_days)
    passes = find_passes(scn.orbit, site, scn.orbit.epoch, t1, sel.min_elevation_deg)
    out = _outdir(args) / "passes.csv"
    pl.write_csv(out, pl.PASS_COLUMNS, pass_samples_csv_rows(passes), scn,
                 stamp=args.stamp)
    print(f"{len(passes)} passes over {site.name} in {sel.search_days:.0f} days -> {out}")
    for pw in passes:
        print(f"  rise {pw.rise.isoformat()}  dur {pw.duration_s:6.0f} s  "
              f"max elev {pw.max_elevation_deg:5.1f} deg")
    return EXIT_OK


def _cmd_polangle(args) -> int:
    scn = _load(args)
    pw = pl.select_pass(scn)
    site = scn.site(scn.pass_selection.site)
    chain = FrameChain()
    rows = []
    for s in pw.samples:
        state = propagate(scn.orbit, s.time)
        angle = predicted_rotation_angle(state, site, chain)
        rows.append((s.time.isoformat(), angle))
    out = _outdir(args) / "polangle.csv"
    pl.write_csv(out, pl.ANGLE_COLUMNS, rows, scn, stamp=args.stamp)
    print(f"predicted angle over {len(rows)} samples -> {out}")
    return EXIT_OK


def _cmd_simulate(args) -> int:
    scn = _load(args)
    result = pl.run_simulation(scn)
    out = _outdir(args)
    pl.write_csv(out / "sync_windows.csv", pl.SYNC_COLUMNS,
                 pl.sync_window_rows(result), scn, stamp=args.stamp)
    pl.write_csv(out / "qber_windows.csv", pl.QBER_COLUMNS,
                 result.qber_report.csv_rows(), scn, stamp=args.stamp)
    summary = result.summary_lines()
    (out / "summary.txt").write_text("\n".join(summary) + "\n", encoding="utf-8")
    if args.save_raw:
        result.clicks.save_ttag(out / "clicks.ttag")
        result.reference.save(out / "reference.pn15")
    for line in summary:
        print(line)
    return EXIT_OK


def _cmd_qber(args) -> int:
    scn = _load(args)
    clicks = ClickStream.load_ttag(args.ttag)
    reference = ReferenceKey.load(args.reference)
    estimates = recover_clock(
        clicks, reference.clock_hz, scn.sync.window_s,
        search_hz=scn.sync.search_hz, min_clicks=scn.sync.min_clicks,
    )
    assignment = assign_stream(clicks, estimates, scn.sync.gate_ps)
    sifted = sift(assignment, clicks, reference=reference)
    report = compute_qber(sifted, reference, scn.protocol.window_s,
                          min_conclusive=scn.protocol.min_conclusive)
    out = _outdir(args)
    pl.write_csv(out / "qber_windows.csv", pl.QBER_COLUMNS, report.csv_rows(),
                 scn, stamp=args.stamp)
    print(f"{len(sifted)} sifted bits, minimum window QBER {report.min_qber():.4f}")
    return EXIT_OK


def _cmd_network_sweep(args) -> int:
    scn = _load(args)
    rows = pl.run_network_sweep(scn)
    out = _outdir(args) / "network_sweep.csv"
    pl.write_csv(
        out, pl.SWEEP_COLUMNS,
        [(r.altitude_km, r.total_key_time_s, r.mean_time_between_ogs_s,
          r.mean_session_s, r.n_distributions) for r in rows],
        scn, stamp=args.stamp,
    )
    print(f"network sweep over {len(rows)} altitudes -> {out}")
    for r in rows:
        print(f"  h={r.altitude_km:6.0f} km  total={r.total_key_time_s:10.0f} s  "
              f"gap={r.mean_time_between_ogs_s:8.0f} s  "
              f"session={r.mean_session_s:6.0f} s  n={r.n_distributions}")
    return EXIT_OK


_COMMANDS = {
    "linkbudget": _cmd_linkbudget,
    "passes": _cmd_passes,
    "polangle": _cmd_polangle,
    "simulate": _cmd_simulate,
    "qber": _cmd_qber,
    "network-sweep": _cmd_network_sweep,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ScenarioError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (SimulationError, ValueError, OSError) as err:
        print(f"runtime error: {err}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
