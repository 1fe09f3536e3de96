"""Exception taxonomy shared across the package.

Exit-code mapping used by the CLI: ConfigError family -> 2,
data/schema problems -> 3, numeric divergence -> 4.
"""


class CafError(Exception):
    """Base class for all package errors."""


class ConfigError(CafError):
    """Invalid configuration: bad graph declaration, bad flag, bad quantile."""


class SchemaError(CafError):
    """Input file does not match its declared schema."""


class DataError(CafError):
    """Malformed or insufficient data (bad cell, bad timestamps, no windows)."""


class ShapeError(CafError):
    """Tensor shapes are not conformable for the requested operation."""


class MaskError(CafError):
    """A mask would make an attention row undefined (all entries forbidden)."""


class NumericError(CafError):
    """Non-finite values where finite ones are required."""


class InputError(CafError):
    """A model input is outside its admissible range."""


class StateError(CafError):
    """An operation was called before required state was established."""


class DivergedError(NumericError):
    """Training loss became non-finite. Carries the last good parameters."""

    def __init__(self, message, last_good=None, history=None):
        super().__init__(message)
        self.last_good = last_good
        self.history = history
