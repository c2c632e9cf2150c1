"""Exception hierarchy shared by all modules."""


class CacheLatticeError(Exception):
    """Base class for errors raised by this package."""


class InvalidArgument(CacheLatticeError, ValueError):
    pass


class DomainError(CacheLatticeError, ValueError):
    """A point or set lies outside the domain an operation is defined on."""


class SizeError(CacheLatticeError, ValueError):
    """A requested exhaustive search exceeds the supported size."""


class ConfigError(CacheLatticeError):
    pass


class InfeasibleAnalysis(CacheLatticeError):
    """The analysis has no meaningful result (e.g. no potential conflicts)."""


class InvariantViolation(CacheLatticeError):
    """An internal cross-check between independent computations failed."""
