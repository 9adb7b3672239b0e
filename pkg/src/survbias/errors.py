"""Exception types raised across the pipeline."""


class SurvbiasError(Exception):
    """Base class for all toolkit errors."""


class SchemaUnrecognized(SurvbiasError):
    """Raised when a file header has no locatable SYMBOL or CLOSE column."""


class FileUnreadable(SurvbiasError):
    """Raised when a raw input file cannot be read at all."""


class EmptyFile(SurvbiasError):
    """Raised when a raw input file has zero data rows, or zero rows parse."""


class EmptyDate(SurvbiasError):
    """Raised when a ranking is requested for a date with no records."""


class EmptyWindow(SurvbiasError):
    """Raised when a backtest window contains fewer than two trading dates."""


class DomainError(SurvbiasError):
    """Raised when a return series violates a metric's domain (r <= -1)."""


class ZeroVolatility(SurvbiasError):
    """Raised when a Sharpe ratio is requested for a zero-variance series."""


class WindowMismatch(SurvbiasError):
    """Raised when bias is computed between metrics from different windows."""
