"""Exception hierarchy shared by the package and the CLI exit codes."""


class WickNLSError(Exception):
    """Base class for all package errors."""


class ConfigError(WickNLSError, ValueError):
    """Invalid configuration or construction parameters."""


class AliasingError(WickNLSError, ValueError):
    """Grid too small for an exact (alias-free) transform."""


class DegenerateEnsembleError(WickNLSError):
    """No member carries a finite weight."""


class ProjectionError(WickNLSError, ValueError):
    """Radial projection onto a mass level set is impossible."""


class BlowUpError(WickNLSError, FloatingPointError):
    """Non-finite state encountered during time integration."""

    def __init__(self, message, last_valid_time=None):
        super().__init__(message)
        self.last_valid_time = last_valid_time


class InfeasibleLevelError(WickNLSError):
    """Conditioning on a level set retained no member."""

    def __init__(self, message, suggested_delta=None):
        super().__init__(message)
        self.suggested_delta = suggested_delta


class UndefinedSurfaceError(WickNLSError):
    """Estimated density of the conditioning variable vanishes at r."""


class SampleSizeError(WickNLSError, ValueError):
    """Too few samples for the requested statistic."""


class HashMismatchError(WickNLSError):
    """Refusal to aggregate outputs produced by different configs."""
