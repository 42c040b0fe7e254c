"""Shared exception types."""


class WfevalError(Exception):
    """Base class for all package errors."""


class ConfigError(WfevalError):
    """Bad or missing configuration (keys, column maps, unknown rules)."""


class DataError(WfevalError):
    """Malformed or inconsistent input data (bad rows, duplicates, gaps)."""


class ScheduleError(WfevalError):
    """Walk-forward schedule cannot be built from the available history."""


class ModelError(WfevalError):
    """Model fitting or prediction failure."""


class CoverageError(WfevalError):
    """Two frames that must cover the same (date, ticker) keys do not."""


class CacheError(WfevalError):
    """Forecast cache corruption or unreadable entries."""
