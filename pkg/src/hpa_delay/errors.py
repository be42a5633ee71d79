"""Exception types raised by the analysis routines."""


class HPAError(Exception):
    """Base class for every error raised by this package."""


class InvalidInputError(HPAError, ValueError):
    """Non-finite or out-of-range input data."""


class DomainError(HPAError, ValueError):
    """Input lies outside the domain where an operation is defined."""


class UnsupportedCaseError(HPAError, ValueError):
    """The parameter set does not belong to the case an operation handles."""


class GuardViolationError(HPAError):
    """A theorem guard failed, e.g. P(0) + Q(0) = 0."""


class InternalConsistencyError(HPAError, RuntimeError):
    """Two independent evaluation routes disagree."""


class NonConvergenceError(HPAError, RuntimeError):
    """An iterative procedure failed to converge."""


class InfeasibleHistoryError(HPAError, ValueError):
    """No catalog history satisfies the requested endpoint constraints."""
