"""Typed error hierarchy shared across the package.

Every error carries an ``exit_code`` used by the CLI: 2 for bad inputs or
configuration, 3 for numerical failures encountered mid-computation.
"""


class MixforgeError(Exception):
    exit_code = 2


class SchemaError(MixforgeError):
    """Input file is missing a declared column or has a malformed layout."""


class CadenceError(MixforgeError):
    """Dates are not a uniform daily or weekly grid (gap, duplicate, or T < 2)."""


class DomainError(MixforgeError):
    """A value violates its domain (negative spend, non-finite target)."""


class ScaleError(MixforgeError):
    """A column has zero maximum absolute value and cannot be max-abs scaled."""


class SnapshotError(MixforgeError):
    """Snapshot file cannot be parsed, or its version is unsupported."""


class BoundsError(MixforgeError):
    """An index (channel or time) is outside the fitted model's range."""


class ParameterError(MixforgeError):
    """A parameter is outside its support or dimensions do not match."""


class DimensionError(MixforgeError):
    """Series lengths or matrix shapes disagree."""


class InsufficientDataError(MixforgeError):
    """Not enough observations for the requested operation."""


class PriorError(MixforgeError):
    """Prior construction failed (e.g. every time step had zero total spend)."""


class ConfigurationError(MixforgeError):
    """A run configuration is internally inconsistent or has unknown keys."""


class FeasibilityError(MixforgeError):
    """Allocation constraints admit no feasible plan."""


class UndefinedMetricError(MixforgeError):
    """A metric is undefined on the given series (constant actual, zeros)."""

    exit_code = 3


class InitializationError(MixforgeError):
    """Sampler could not find a finite log posterior at its starting point."""

    exit_code = 3


class SamplerError(MixforgeError):
    """MCMC sampling failed (e.g. zero acceptance through warmup)."""

    exit_code = 3


class FitError(MixforgeError):
    """Optimizer failed to converge; carries best-so-far diagnostics."""

    exit_code = 3

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
