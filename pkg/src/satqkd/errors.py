"""Exception types raised by the simulator.

Plain ``ValueError`` is used for scalar domain/range violations (negative
distance, out-of-band altitude, ...); the classes here mark failures of
whole operations that callers may want to handle separately.
"""


class SimulationError(Exception):
    """Base class for simulator-level failures."""


class GeometryError(SimulationError):
    """Requested geometry is invalid (e.g. satellite below the horizon)."""


class DegenerateGeometryError(GeometryError):
    """Projection onto the transverse plane is numerically degenerate."""


class CoverageError(SimulationError):
    """A channel profile does not cover the requested time span."""


class EstimationError(SimulationError):
    """An estimator had too little data to produce a result."""

    def __init__(self, message: str, window_index: int | None = None):
        super().__init__(message)
        self.window_index = window_index


class CalibrationError(SimulationError):
    """Port calibration received unusable reference counts."""


class ProtocolError(SimulationError):
    """Key-relay protocol violation (length mismatch, key reuse, ...)."""


class UnderrunError(ProtocolError):
    """A QKD session did not deliver enough bits for the requested key."""


class ScenarioError(SimulationError):
    """Scenario file is missing, malformed, or references unknown config."""
