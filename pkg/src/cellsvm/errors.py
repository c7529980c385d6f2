"""Exception types shared across the package."""


class CellSvmError(Exception):
    """Base class for all cellsvm errors."""


class ParseError(CellSvmError):
    """Malformed input file. Carries the 1-based line (and optionally column)."""

    def __init__(self, message, line=None, column=None):
        loc = ""
        if line is not None:
            loc = f" (line {line}" + (f", column {column}" if column is not None else "") + ")"
        super().__init__(message + loc)
        self.line = line
        self.column = column


class DataError(CellSvmError):
    """Data inconsistent with the requested operation (dims, labels, ...)."""


class ConfigError(CellSvmError):
    """Invalid configuration key or value."""


class NumericError(CellSvmError):
    """Non-finite values encountered during optimization."""


class SelectionError(CellSvmError):
    """No usable grid point to select from."""
