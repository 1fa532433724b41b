"""Exception types shared across the package."""


class EcrSimError(Exception):
    """Base class for all package errors."""


class ConfigurationError(EcrSimError):
    """Invalid parameters, scenario files, or campaign plans."""


class SimulationError(EcrSimError):
    """A model bug surfaced while the event loop was running.

    Carries the component and simulated time at which the failure occurred so
    batch runs can report where a run died.
    """

    def __init__(self, message, component=None, sim_time=None):
        detail = message
        if component is not None:
            detail += f" [component={component}]"
        if sim_time is not None:
            detail += f" [t={sim_time:.9f}s]"
        super().__init__(detail)
        self.component = component
        self.sim_time = sim_time


class TraceFormatError(EcrSimError):
    """A video trace file could not be parsed."""


class MissingSampleError(EcrSimError):
    """ECR computation was asked to run over an incomplete sample grid."""

    def __init__(self, gaps):
        self.gaps = list(gaps)
        listing = ", ".join(str(g) for g in self.gaps)
        super().__init__(f"missing measure samples for: {listing}")
