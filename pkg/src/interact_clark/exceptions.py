"""Exception hierarchy shared by every module."""


class InteractClarkError(Exception):
    """Base class for all library errors."""


class ConfigError(InteractClarkError):
    """Invalid coefficient family, scenario field or parameter."""

    def __init__(self, message, violations=None):
        super().__init__(message)
        # list of (field_path, message) pairs
        self.violations = list(violations or [])


class NumericError(InteractClarkError):
    """Overflow or NaN encountered during a computation."""

    def __init__(self, message, step=None, particle=None):
        super().__init__(message)
        self.step = step
        self.particle = particle


class DomainError(InteractClarkError):
    """Query outside the domain where a quantity is defined."""


class BandwidthError(InteractClarkError):
    """Kernel bandwidth cannot be chosen (e.g. degenerate samples)."""
