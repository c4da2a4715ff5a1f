"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError/UsageError -> 1,
SchemaError and I/O problems -> 2, NumericalError -> 3.
"""


class ZonekitError(Exception):
    """Base class for all package errors."""


class UsageError(ZonekitError):
    """Bad command-line invocation."""


class ConfigError(ZonekitError):
    """Invalid configuration value or missing config key."""


class SchemaError(ZonekitError):
    """Input file does not match its declared schema."""


class InvalidGeometryError(ZonekitError):
    """Degenerate or malformed polygon."""


class NumericalError(ZonekitError):
    """A numerical routine could not produce a valid result."""


class DegenerateDataError(NumericalError):
    """Data carries no usable structure (zero variance, coincident points)."""


class VariogramFitError(NumericalError):
    """Variogram fit did not converge; carries the best model found so far."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best
