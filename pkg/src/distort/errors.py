"""Exception taxonomy shared by all engines.

Exit-code mapping used by the CLI: configuration and input-domain problems
exit with 2, numeric/accuracy failures with 3, consistency violations with 4.
"""


class DistortError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(DistortError):
    """Invalid configuration, schema violation, or bad constructor parameters."""

    exit_code = 2


class DomainError(DistortError):
    """Mathematically invalid input (probability outside [0,1], negative support, ...)."""

    exit_code = 2


class NumericError(DistortError):
    """Runtime numeric failure (non-finite intermediate, blown-up exponent, ...)."""

    exit_code = 3


class AccuracyError(NumericError):
    """A computation finished but failed its own accuracy or conservation check."""


class SingularityError(NumericError):
    """Density or derivative vanished where a formula needs to divide by it."""


class ConsistencyError(DistortError):
    """A structural consistency condition failed (transition interleaving, tower check)."""

    exit_code = 4
