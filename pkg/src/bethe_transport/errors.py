# src/bethe_transport/errors.py

from typing import Any, Dict, Optional


class BetheTransportError(Exception):
    """Base class for every error raised by the package."""

    exit_code = 3


class ConfigError(BetheTransportError):
    """Invalid experiment configuration; carries field-level messages."""

    exit_code = 2

    def __init__(self, message: str, fields: Optional[Dict[str, str]] = None):
        super().__init__(message)
        self.fields = fields or {}


class ParameterError(BetheTransportError, ValueError):
    """A domain parameter is outside its admissible range."""

    exit_code = 2


class VertexIndexError(BetheTransportError, IndexError):
    """A vertex id does not address a vertex of the geometry."""


class VertexCountOverflow(BetheTransportError, OverflowError):
    """The tree has more vertices than the index type can address."""


class OracleSizeError(BetheTransportError):
    """The dense oracle was asked to build a matrix beyond its guard."""

    exit_code = 2


class NumericalAbort(BetheTransportError):
    """A non-finite value appeared; `diagnostics` records where."""

    exit_code = 3

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}

    def __str__(self) -> str:
        base = super().__str__()
        if not self.diagnostics:
            return base
        details = ", ".join(f"{k}={v}" for k, v in self.diagnostics.items())
        return f"{base} ({details})"


class QuadratureNotConverged(BetheTransportError):
    """Raised inside the node-doubling loop while the shell masses still move."""

    def __init__(self, nodes: int, change: float):
        super().__init__(f"quadrature with {nodes} nodes changed a shell mass by {change:.3e}")
        self.nodes = nodes
        self.change = change


class PoolNotStationary(BetheTransportError):
    """Raised inside the burn-in loop while the half-run drift test fails."""

    def __init__(self, sweeps_done: int, drift: float):
        super().__init__(f"pool drift {drift:.2f} std errors after {sweeps_done} sweeps")
        self.sweeps_done = sweeps_done
        self.drift = drift


class SnapshotFormatError(BetheTransportError):
    """A pool snapshot file is truncated, foreign or of an unknown version."""

    exit_code = 2


class OutputExistsError(BetheTransportError):
    """The output directory already holds results and ``--force`` was not given."""

    exit_code = 2
