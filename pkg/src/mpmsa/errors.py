"""Exception hierarchy shared by all modules."""


class MpmsaError(Exception):
    pass


class DomainError(MpmsaError, ValueError):
    """An input lies outside the domain of an operation."""


class CapacityError(MpmsaError):
    """A requested object exceeds a configured size cap."""

    def __init__(self, message, size=None, cap=None):
        super().__init__(message)
        self.size = size
        self.cap = cap


class ResonanceError(MpmsaError):
    """An energy is too close to a spectrum for a resolvent to be trusted."""

    def __init__(self, message, distance):
        super().__init__(f"{message} (spectral distance {distance:.3e})")
        self.distance = distance


class ConsistencyError(MpmsaError):
    """An internal invariant that should be impossible to break was broken."""


class ConfigError(MpmsaError, ValueError):
    """An experiment configuration is invalid."""
