"""Exception hierarchy shared across the package."""


class TransportError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(TransportError, ValueError):
    pass


class DomainError(TransportError, ValueError):
    """An argument lies outside the domain of a function."""


class NumericDomainError(TransportError, ArithmeticError):
    """A computation produced a non-finite value.

    ``location`` carries the offending node or index when known.
    """

    def __init__(self, message, location=None):
        super().__init__(message)
        self.location = location


class IllConditionedError(TransportError, ArithmeticError):
    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class NotSPDError(TransportError, ArithmeticError):
    def __init__(self, message, pivot=None):
        super().__init__(message)
        self.pivot = pivot


class NotMonotoneError(TransportError, ValueError):
    pass


class MonotonicityViolationError(NotMonotoneError):
    pass


class BracketError(TransportError, ArithmeticError):
    """Root bracketing failed, typically because a map has runaway tails."""


class InsufficientDataError(TransportError, ValueError):
    pass


class DivergenceError(TransportError, ArithmeticError):
    """A divergence integral is not finite (e.g. mismatched supports)."""


class OptimizationError(TransportError, RuntimeError):
    def __init__(self, message, last_x=None):
        super().__init__(message)
        self.last_x = last_x
