"""satqkd: desk-scale simulator of satellite-to-ground B92 key distribution.

Modules cover the full chain: LEO pass geometry and Doppler
(:mod:`satqkd.orbit`), dB-ledger link budgets (:mod:`satqkd.linkbudget`),
polarization transport and angle prediction (:mod:`satqkd.polarization`),
the PN15-driven two-state source (:mod:`satqkd.source`), the four-port
single-photon receiver (:mod:`satqkd.receiver`), clock recovery and slot
assignment (:mod:`satqkd.sync`), sifting and QBER (:mod:`satqkd.protocol`),
and the trusted-node relay network study (:mod:`satqkd.keynet`).
"""

__version__ = "0.1.0"

from .orbit import (  # noqa: F401
    GroundSite,
    OrbitSpec,
    PassWindow,
    SatState,
    doppler_shift,
    find_passes,
    propagate,
    sso_inclination,
    topocentric,
)
from .linkbudget import (  # noqa: F401
    BudgetConfig,
    BudgetLedger,
    BudgetTerm,
    REFERENCE_CONFIGS,
    compute_budget,
    divergence_footprint_m,
    fspl_db,
    photons_per_pulse,
)
from .polarization import (  # noqa: F401
    FrameChain,
    LinearPolarization,
    StokesState,
    apply_retardance,
    dop,
    malus_probability,
    predicted_rotation_angle,
    rotate_frame,
)
from .source import Pn15Generator, PulseEvent, TxFrame, encode_b92, sample_photon_count  # noqa: F401
from .receiver import (  # noqa: F401
    ChannelProfile,
    ClickEvent,
    ClickStream,
    ReceiverModel,
    calibrate_ports,
    detect_pulse,
    run_pass,
)
from .sync import ClockModel, SlotAssignment, assign_slots, estimate_angle, recover_clock  # noqa: F401
from .protocol import QberReport, ReferenceKey, SiftedKey, compute_qber, key_rate, sift  # noqa: F401
from .keynet import (  # noqa: F401
    DistributionEvent,
    KeyMaterial,
    KeySession,
    altitude_sweep,
    run_relay,
    xor_relay,
)
from .scenario import Scenario, load_scenario  # noqa: F401
