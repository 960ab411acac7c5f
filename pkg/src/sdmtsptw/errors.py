"""Exception types shared across the solver suite."""


class SdmError(Exception):
    """Base class for all package errors."""


class InvalidInputError(SdmError, ValueError):
    """Input violates a documented precondition."""


class ParseError(InvalidInputError):
    """Malformed instance or scenario text."""

    def __init__(self, message, lineno=None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class OutOfRangeError(InvalidInputError):
    """Query point lies outside the sampled range of a curve."""


class BudgetError(SdmError):
    """Exact enumeration requested beyond its size budget."""


class InfeasibleError(SdmError):
    """No feasible solution exists (or none was found)."""


class ConstraintViolation(SdmError):
    """A schedule breaks a model constraint (e.g. must-maintain)."""
