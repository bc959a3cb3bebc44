"""Exception types shared across the package."""


class CreaseError(Exception):
    """Base class for all package errors."""


class ValidationError(CreaseError, ValueError):
    """Bad input or parameters; nothing was computed."""


class ConstraintError(ValidationError):
    """A sampling constraint (margin, degree, index) was violated."""


class DomainError(ValidationError):
    """Curve parameter outside [0, 1]."""


class NumericalError(CreaseError, ArithmeticError):
    """A numerical routine failed beyond its tolerance."""
