"""Exception types shared across the package."""


class BetaMixError(Exception):
    """Base class for all package errors."""


class DomainError(BetaMixError, ValueError):
    """An argument lies outside the domain where the operation is defined."""


class AccuracyError(BetaMixError, ArithmeticError):
    """A numerical procedure did not reach the requested accuracy.

    The best available estimate is kept on the exception so callers can
    decide whether it is good enough.
    """

    def __init__(self, message, estimate=None, error=None):
        super().__init__(message)
        self.estimate = estimate
        self.error = error


class DegeneracyError(BetaMixError, ArithmeticError):
    """A moment sequence supports fewer nodes than requested."""


class BudgetError(BetaMixError, RuntimeError):
    """A size or time budget would be exceeded."""


class ContractError(BetaMixError, ValueError):
    """Inputs are individually valid but inconsistent with each other."""


class CatalogError(BetaMixError, KeyError):
    """Unknown identifier in a fixed catalog."""
