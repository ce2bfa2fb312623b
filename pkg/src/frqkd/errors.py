"""Exception and warning types shared across the package."""


class FrqkdError(Exception):
    """Base class for all package errors."""


class ConfigError(FrqkdError):
    """A configuration value violates an invariant.

    Carries the offending key and, when parsed from a file, its line number
    so CLI diagnostics can point at the exact location.
    """

    def __init__(self, message, key=None, line=None):
        self.key = key
        self.line = line
        prefix = ""
        if key is not None:
            prefix = f"{key}: " if line is None else f"line {line}, {key}: "
        super().__init__(prefix + message)


class InsufficientStatisticsError(FrqkdError):
    """A cell or dataset has too few counts for the requested estimate."""


class UnclassifiableSubsetError(FrqkdError):
    """A subset cannot be assigned a frame angle (routed to the reject pool)."""


class StatisticsInconsistentError(UnclassifiableSubsetError):
    """Observed error rates lie far outside the calibrated model envelope."""


class ComputationError(FrqkdError):
    """A numerical stage failed (e.g. infeasible decoy linear program)."""


class StatisticsInconsistentWarning(UserWarning):
    """Observed rates required clamping beyond the tolerated envelope."""
