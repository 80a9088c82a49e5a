"""Error types shared across the package.

Numerical failures (PicardDiverged, BlowUp, NotConverged) map to CLI exit
code 4, budget rejections to 5, config validation to 2, I/O to 3.
"""


class PicardDiverged(RuntimeError):
    """Fixed-point iteration failed to contract.

    Signals that the cutoff radius or the Picard subinterval length is too
    large for the problem at hand.
    """


class BlowUp(RuntimeError):
    """A simulated path exceeded the norm guard (time step too large)."""


class NotConverged(RuntimeError):
    """Action minimization stopped before meeting its tolerances."""


class BudgetExceeded(RuntimeError):
    """Requested experiment exceeds the desk-scale compute budget."""


class ConfigError(ValueError):
    """Base class for config validation failures; carries the field path."""

    def __init__(self, field, message):
        self.field = field
        self.message = message
        super().__init__(f"{field}: {message}" if field else message)


class ParseError(ConfigError):
    """File is not readable as UTF-8 JSON."""


class SchemaError(ConfigError):
    """Structurally invalid config (missing/unknown fields, wrong types)."""


class RangeError(ConfigError):
    """Field value outside its documented range."""
