"""Exception types shared across the library."""


class CqLabError(Exception):
    """Base class for all cq-lab errors."""


class ValidationError(CqLabError):
    """An object failed its structural invariants."""


class DimensionMismatchError(CqLabError):
    """Operands live on incompatible spaces."""


class CapacityError(CqLabError):
    """A requested dense object exceeds the configured dimension cap."""


class SupportError(CqLabError):
    """A relative-entropy support precondition failed."""


class ConfigError(CqLabError):
    """An experiment configuration is missing, malformed, or inconsistent."""
