"""Exception hierarchy shared by all annuflux modules.

The classes map onto the CLI exit-code groups: configuration problems,
physical-domain violations, numerical failures, and comparison failures.
"""


class AnnufluxError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(AnnufluxError, ValueError):
    """Malformed or inconsistent run configuration (bad key, bad value, failed guard)."""


class DomainError(AnnufluxError, ValueError):
    """Argument outside the physical or mathematical domain of an operation."""


class NumericalError(AnnufluxError, RuntimeError):
    """A numerical procedure failed to meet its accuracy or validity contract."""


class EnumerationError(NumericalError):
    """Root enumeration could not be completed within the working range."""


class CertificationError(NumericalError):
    """Requested evaluation lies outside the certified truncation regime."""


class ComparisonFailure(AnnufluxError, RuntimeError):
    """A cross-validation run exceeded its agreement threshold."""
