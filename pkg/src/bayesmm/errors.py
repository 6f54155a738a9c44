"""Exception types shared across the package."""


class BayesmmError(Exception):
    """Base class for package errors."""


class DomainError(BayesmmError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ConvergenceError(BayesmmError, RuntimeError):
    """An iterative routine exhausted its budget before reaching tolerance."""


class NotSPDError(DomainError):
    """A matrix required to be symmetric positive definite is not."""


class InvalidIntervalError(DomainError):
    """An integration interval is empty, reversed, or non-finite."""


class UnbalancedDataError(BayesmmError, ValueError):
    """Grouped data do not form a balanced design."""


class RankDeficiencyError(BayesmmError, ValueError):
    """A design matrix does not have full column rank."""
