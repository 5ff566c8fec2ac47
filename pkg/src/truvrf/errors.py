"""Exception types shared across the toolkit."""


class TruvrfError(Exception):
    """Base class for every error raised by this package."""


class InvalidInput(TruvrfError, ValueError):
    """An argument violates an operation's precondition."""


class FormatError(TruvrfError, ValueError):
    """A file on disk does not match the expected binary layout."""


class CalibrationError(TruvrfError, RuntimeError):
    """Shadow-model calibration produced an unusable measurement."""


class InfeasibleScenario(InvalidInput):
    """The requested server behaviour or request cannot be realised on the data."""


class ConfigError(InvalidInput):
    """A scenario configuration is malformed or inconsistent."""


class EmptyReport(TruvrfError, RuntimeError):
    """Every trial of a benchmark was skipped."""
