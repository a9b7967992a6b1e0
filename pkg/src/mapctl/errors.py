"""Exception hierarchy shared by all mapctl modules."""


class MapctlError(Exception):
    """Base class for every error raised by mapctl."""


class NumericalError(MapctlError):
    """A numerical procedure failed (non-convergence, singular system)."""


# --- process validation -----------------------------------------------------

class MapValidationError(MapctlError, ValueError):
    """Matrices do not describe a valid Markovian arrival process."""


class DimensionMismatchError(MapValidationError):
    pass


class NegativeRateError(MapValidationError):
    pass


class RowSumError(MapValidationError):
    pass


class SingularD0Error(MapValidationError):
    pass


class ReducibleError(MapValidationError):
    pass


class PhaseTypeError(MapctlError, ValueError):
    """Invalid phase-type representation or unattainable fit."""


class StationaryVectorError(NumericalError):
    pass


# --- queueing / control -----------------------------------------------------

class InstabilityError(MapctlError, ValueError):
    """Arrival rate is not strictly below the (full-production) service rate."""


class ConvergenceError(NumericalError):
    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class StructureViolation(MapctlError):
    """A policy table is not of threshold type."""

    def __init__(self, message, state=None, window=None):
        super().__init__(message)
        self.state = state
        self.window = window


class CyclingError(NumericalError):
    def __init__(self, message, previous=None, current=None):
        super().__init__(message)
        self.previous = previous
        self.current = current


class BoundaryActiveWarning(UserWarning):
    """Optimal action wants to produce at the upper truncation level."""


# --- simulation / traces ----------------------------------------------------

class ConfigError(MapctlError, ValueError):
    pass


class SimulationInstabilityError(InstabilityError):
    pass


class TraceError(MapctlError, ValueError):
    pass


class MissingColumnError(TraceError):
    pass


class TimestampParseError(TraceError):
    pass


class OrderingError(TraceError):
    def __init__(self, message, rows=()):
        super().__init__(message)
        self.rows = list(rows)


class ZeroVarianceError(TraceError):
    pass
