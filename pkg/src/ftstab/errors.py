"""Exception hierarchy shared across the package."""


class FtsError(Exception):
    """Base class for all errors raised by :mod:`ftstab`."""


class ValidationError(FtsError, ValueError):
    """Input data violates a structural invariant.

    The list of individual violations is kept on ``violations``.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations) or "invalid input")


class SizeCapError(FtsError):
    """An explicit transition-matrix construction would exceed the row cap."""


class ConditioningError(FtsError, ArithmeticError):
    """A matrix that must be positive definite is numerically singular."""


class PreconditionError(FtsError):
    """An operation was called on data that does not satisfy its precondition."""


class CertificateError(FtsError):
    """A solver result cannot be turned into a trustworthy certificate."""
