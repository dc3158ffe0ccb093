"""Exception hierarchy shared across the package.

Every error raised by the library derives from :class:`OptliqError` so callers
can distinguish library failures from programming mistakes.  The subclasses
mirror the failure modes of the numerical pipeline: bad math domain, malformed
arguments, unsupported model families, integrability violations, regression
degeneracy and solver breakdowns.
"""


class OptliqError(Exception):
    """Base class for all package errors."""


class DomainError(OptliqError, ValueError):
    """Mathematical domain violation (p <= 1, evaluation at or past the horizon, ...)."""


class ArgumentError(OptliqError, ValueError):
    """Malformed, inconsistent or out-of-contract arguments."""


class UnsupportedModelError(OptliqError):
    """The operation is not available for this impact/risk family."""


class IntegrabilityError(OptliqError):
    """A required integrability condition fails for the requested model."""


class PositivityError(OptliqError):
    """Impact values must be strictly positive (no floor requested)."""


class BasisError(OptliqError):
    """Regression design matrix is rank deficient for a non-degenerate state."""


class NumericalError(OptliqError):
    """An iterative solve failed to converge; carries the offending node index."""

    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


class SolverInconsistencyError(OptliqError):
    """Solver output violates a structural guarantee (e.g. monotonicity in the penalty level)."""


class CoverageError(OptliqError):
    """Y values are missing at nodes required by the consumer."""


class ConfigError(OptliqError, ValueError):
    """Invalid run configuration (unknown keys, bad types, inconsistent values)."""
