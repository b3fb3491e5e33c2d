"""Exception hierarchy.

Input problems derive from ``InvalidInput`` (a ``ValueError``); failures of
a numerical contract derive from ``NumericalError``.  The CLI maps the two
families to different exit codes.
"""


class PiwError(Exception):
    """Base class for all errors raised by piwcov."""


class InvalidInput(PiwError, ValueError):
    """An argument is outside the documented domain."""


class InvalidMatrix(InvalidInput):
    """A matrix contains non-finite entries or has the wrong shape."""


class DimensionError(InvalidInput):
    """Operands have incompatible dimensions."""


class NotPositiveDefinite(InvalidInput):
    """A strictly positive definite matrix was required."""


class InsufficientData(InvalidInput):
    """Too few observations for the requested statistic."""


class NotDiagonalScalePrior(InvalidInput):
    """The operation needs a prior with scale ``alpha * I``."""


class SingularBlock(PiwError):
    """The observed block of a covariance matrix cannot be inverted."""


class NumericalError(PiwError, ArithmeticError):
    """A numerical contract (residual, bound) was violated."""


class SolverError(NumericalError):
    """The eigenvalue equation solver failed to converge."""
