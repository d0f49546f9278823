"""Exception types raised across the package."""


class SlitQuditError(Exception):
    """Base class for all package errors."""


class DimensionMismatchError(SlitQuditError, ValueError):
    pass


class NotTwoQubitsError(SlitQuditError, ValueError):
    pass


class AllCoefficientsZeroError(SlitQuditError, ValueError):
    """The pump vanishes at every populated slit-pair midpoint."""


class AllRatesZeroError(SlitQuditError, ValueError):
    pass


class InvalidSlitLabelError(SlitQuditError, ValueError):
    pass


class ScanCoverageIncompleteError(SlitQuditError, ValueError):
    pass


class EmptyDataError(SlitQuditError, ValueError):
    pass


class ZeroDenominatorError(SlitQuditError, ZeroDivisionError):
    pass


class InsufficientResamplesError(SlitQuditError, ValueError):
    pass


class ConfigError(SlitQuditError, ValueError):
    """Invalid experiment configuration (maps to CLI exit code 2)."""


class DataFormatError(SlitQuditError, ValueError):
    """Malformed input data file; message carries the offending row number."""
