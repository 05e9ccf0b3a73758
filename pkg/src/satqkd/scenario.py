"""Scenario files: one INI-style key/value format for every subcommand.

A scenario is a plain-text file with ``[section]`` headers and ``key = value``
pairs, versioned by ``schema = 1`` in its ``[scenario]`` section.  Sections
``[site.<name>]`` define ground stations; the remaining sections configure
the orbit, the selected pass, the budget, the quantum source, the channel
fit, the receiver, clock recovery, sifting windows and the network sweep.
Unknown sections or keys raise, so typos fail loudly.
"""
from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path

from .errors import ScenarioError
from .linkbudget import REFERENCE_CONFIGS, BudgetConfig
from .orbit import GroundSite, OrbitSpec, sso_inclination
from .receiver import ReceiverModel

_KNOWN_SECTIONS = {
    "scenario", "orbit", "pass", "budget", "source", "channel",
    "receiver", "sync", "protocol", "network",
}


@dataclass
class PassSelection:
    site: str = "tokyo"
    min_elevation_deg: float = 20.0
    search_days: float = 14.0
    select_max_elevation_deg: tuple[float, float] = (65.0, 88.0)
    index: int = 0  # which matching pass to take


@dataclass
class SourceParams:
    clock_hz: float = 10e6
    mean_photons: float = 0.6
    pn15_seed: int = 0x7FFF


@dataclass
class ChannelParams:
    eta_chain: float = 1.3e-3
    reference_distance_km: float = 992.0
    reference_elevation_deg: float = 35.0
    atm_zenith_db: float = 1.0
    angle_profile: str = "linear"  # linear | geometry | constant
    angle_start_deg: float = -40.0
    angle_end_deg: float = 40.0
    analysis_duration_s: float = 120.0


@dataclass
class SyncParams:
    window_s: float = 1.0
    gate_ps: int = 20_000
    search_hz: float = 300.0
    min_clicks: int = 500


@dataclass
class ProtocolParams:
    window_s: float = 1.0
    min_conclusive: int = 100


@dataclass
class NetworkParams:
    altitudes_km: tuple[float, ...] = (300.0, 600.0, 900.0, 1200.0, 1500.0, 1800.0)
    year: int = 2018
    min_elevation_deg: float = 20.0
    rate_bit_s: float = 1000.0
    days: float = 365.0
    sites: tuple[str, str] = ("tokyo", "madrid")


@dataclass
class Scenario:
    name: str
    seed: int
    path: Path | None = None
    sha: str = ""
    orbit: OrbitSpec | None = None
    sites: dict[str, GroundSite] = field(default_factory=dict)
    budget_config: BudgetConfig | None = None
    pass_selection: PassSelection = field(default_factory=PassSelection)
    source: SourceParams = field(default_factory=SourceParams)
    channel: ChannelParams = field(default_factory=ChannelParams)
    receiver: ReceiverModel = field(default_factory=ReceiverModel)
    sync: SyncParams = field(default_factory=SyncParams)
    protocol: ProtocolParams = field(default_factory=ProtocolParams)
    network: NetworkParams = field(default_factory=NetworkParams)

    def site(self, name: str) -> GroundSite:
        if name not in self.sites:
            raise ScenarioError(f"scenario defines no site named {name!r}")
        return self.sites[name]


def _parse_section(cfg, name, spec, out):
    """Populate dataclass ``out`` from section ``name`` using ``spec``, a
    mapping key -> converter; unknown keys raise."""
    if not cfg.has_section(name):
        return out
    for key in cfg.options(name):
        if key not in spec:
            raise ScenarioError(f"unknown key {key!r} in section [{name}]")
        setattr(out, key, spec[key](cfg.get(name, key)))
    return out


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.split())


def _strings(text: str) -> tuple[str, ...]:
    return tuple(text.split())


def load_scenario(path) -> Scenario:
    """Parse and validate a scenario file.

    Raises:
        ScenarioError: on missing files, parse errors (with line info from
            the parser), unknown sections/keys or unresolvable references.
    """
    path = Path(path)
    if not path.exists():
        raise ScenarioError(f"scenario file not found: {path}")
    raw = path.read_bytes()
    cfg = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        cfg.read_string(raw.decode("utf-8"), source=str(path))
    except (configparser.Error, UnicodeDecodeError) as err:
        raise ScenarioError(f"scenario parse error: {err}") from err

    for section in cfg.sections():
        if section not in _KNOWN_SECTIONS and not section.startswith("site."):
            raise ScenarioError(f"unknown section [{section}]")

    if not cfg.has_section("scenario"):
        raise ScenarioError("missing [scenario] section")
    schema = cfg.get("scenario", "schema", fallback=None)
    if schema != "1":
        raise ScenarioError(f"unsupported scenario schema {schema!r} (expected 1)")

    scn = Scenario(
        name=cfg.get("scenario", "name", fallback=path.stem),
        seed=cfg.getint("scenario", "seed", fallback=0),
        path=path,
        sha=hashlib.sha256(raw).hexdigest()[:12],
    )

    for section in cfg.sections():
        if section.startswith("site."):
            name = section.split(".", 1)[1]
            scn.sites[name] = GroundSite(
                name=name,
                latitude_deg=cfg.getfloat(section, "latitude_deg"),
                longitude_deg=cfg.getfloat(section, "longitude_deg"),
                altitude_m=cfg.getfloat(section, "altitude_m", fallback=0.0),
            )

    if cfg.has_section("orbit"):
        alt = cfg.getfloat("orbit", "altitude_km")
        inc_text = cfg.get("orbit", "inclination_deg", fallback="sso")
        inc = sso_inclination(alt) if inc_text.strip() == "sso" else float(inc_text)
        scn.orbit = OrbitSpec(
            altitude_km=alt,
            inclination_deg=inc,
            raan_deg=cfg.getfloat("orbit", "raan_deg", fallback=0.0),
            arg_lat_epoch_deg=cfg.getfloat("orbit", "arg_lat_epoch_deg", fallback=0.0),
            epoch=datetime.fromisoformat(cfg.get("orbit", "epoch")),
            j2_enabled=cfg.getboolean("orbit", "j2", fallback=True),
        )
        known = {"altitude_km", "inclination_deg", "raan_deg",
                 "arg_lat_epoch_deg", "epoch", "j2"}
        unknown = set(cfg.options("orbit")) - known
        if unknown:
            raise ScenarioError(f"unknown key(s) {sorted(unknown)} in section [orbit]")

    if cfg.has_section("budget"):
        name = cfg.get("budget", "config")
        if name not in REFERENCE_CONFIGS:
            raise ScenarioError(
                f"unknown budget config {name!r}; available: "
                f"{sorted(REFERENCE_CONFIGS)}"
            )
        base = REFERENCE_CONFIGS[name]
        overrides = {}
        for key in cfg.options("budget"):
            if key == "config":
                continue
            if not hasattr(base, key):
                raise ScenarioError(f"unknown key {key!r} in section [budget]")
            overrides[key] = cfg.getfloat("budget", key)
        scn.budget_config = base.with_overrides(**overrides)

    _parse_section(cfg, "pass", {
        "site": str,
        "min_elevation_deg": float,
        "search_days": float,
        "select_max_elevation_deg": _floats,
        "index": int,
    }, scn.pass_selection)

    _parse_section(cfg, "source", {
        "clock_hz": float,
        "mean_photons": float,
        "pn15_seed": lambda s: int(s, 0),
    }, scn.source)

    _parse_section(cfg, "channel", {
        "eta_chain": float,
        "reference_distance_km": float,
        "reference_elevation_deg": float,
        "atm_zenith_db": float,
        "angle_profile": str,
        "angle_start_deg": float,
        "angle_end_deg": float,
        "analysis_duration_s": float,
    }, scn.channel)
    if scn.channel.angle_profile not in ("linear", "geometry", "constant"):
        raise ScenarioError(
            f"unknown angle_profile {scn.channel.angle_profile!r}"
        )

    if cfg.has_section("receiver"):
        known = {"efficiency", "dark_rate_hz", "jitter_ps", "dead_time_ps",
                 "hwp_angle_deg"}
        unknown = set(cfg.options("receiver")) - known
        if unknown:
            raise ScenarioError(f"unknown key(s) {sorted(unknown)} in section [receiver]")
        eff = _floats(cfg.get("receiver", "efficiency", fallback="0.5 0.5 0.5 0.5"))
        scn.receiver = ReceiverModel(
            port_efficiencies=tuple(eff),
            dark_rate_hz_per_port=cfg.getfloat("receiver", "dark_rate_hz", fallback=500.0),
            timing_jitter_sigma_ps=cfg.getfloat("receiver", "jitter_ps", fallback=350.0),
            dead_time_ps=cfg.getint("receiver", "dead_time_ps", fallback=50_000),
            hwp_angle_deg=cfg.getfloat("receiver", "hwp_angle_deg", fallback=0.0),
        )

    _parse_section(cfg, "sync", {
        "window_s": float,
        "gate_ps": int,
        "search_hz": float,
        "min_clicks": int,
    }, scn.sync)

    _parse_section(cfg, "protocol", {
        "window_s": float,
        "min_conclusive": int,
    }, scn.protocol)

    _parse_section(cfg, "network", {
        "altitudes_km": _floats,
        "year": int,
        "min_elevation_deg": float,
        "rate_bit_s": float,
        "days": float,
        "sites": _strings,
    }, scn.network)

    return scn
