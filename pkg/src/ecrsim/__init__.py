"""Access-network simulator and equivalent-circuit-rate comparison toolkit."""

from .errors import (
    ConfigurationError,
    EcrSimError,
    MissingSampleError,
    SimulationError,
    TraceFormatError,
)
from .kernel import RngStream, SimEvent, Simulator, WarmupGate, derive_stream

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError",
    "EcrSimError",
    "MissingSampleError",
    "SimulationError",
    "TraceFormatError",
    "RngStream",
    "SimEvent",
    "Simulator",
    "WarmupGate",
    "derive_stream",
    "__version__",
]
