"""
Errors - Exception hierarchy shared by the toolkit

Library code raises these; only the CLI turns them into exit codes.
"""

from typing import Optional


class LatentKnnError(Exception):
    """Base class for every error raised by latentknn"""

    exit_code = 1


class ConfigError(LatentKnnError, ValueError):
    """Invalid configuration or parameter value"""

    exit_code = 2


class DataError(LatentKnnError):
    """Input data is malformed or inconsistent"""

    exit_code = 3


class ParseError(DataError):
    """A record could not be parsed"""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DuplicateEntryError(DataError):
    """The same cell appears twice"""


class DimensionError(DataError):
    """An index violates the declared dimensions"""


class ShapeMismatchError(DataError):
    """Two objects that must share a shape do not"""


class MissingEntryError(DataError):
    """A required cell is not observed"""


class InsufficientOverlapError(DataError):
    """Too few common columns to compute a statistic"""


class IndexOutOfRangeError(DataError, IndexError):
    """A row, column or coordinate is outside the valid range"""


class NumericError(LatentKnnError):
    """A numeric result is undefined or outside its domain"""

    exit_code = 4


class UndefinedMetricError(NumericError):
    """A metric has an empty scope or a zero denominator"""


class BoundDomainError(NumericError):
    """Bound parameters are outside the formula's domain"""


class RunCancelled(LatentKnnError):
    """A completion run was cancelled before it finished"""
