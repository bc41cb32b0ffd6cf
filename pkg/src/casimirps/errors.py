"""Exception hierarchy shared by all solver modules."""


class CasimirError(Exception):
    """Base class for solver errors."""


class DomainError(CasimirError, ValueError):
    """An argument lies outside the domain of the function."""


class ConvergenceError(CasimirError, RuntimeError):
    """A quadrature, series or summation failed to converge."""


class SingularityError(CasimirError, ArithmeticError):
    """The matrix 1 - M is numerically singular or has non-positive determinant."""
