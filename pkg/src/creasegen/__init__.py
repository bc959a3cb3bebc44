"""Procedural forehead-crease visual prompts, edge maps and evaluation metrics."""
from .errors import ConstraintError, CreaseError, DomainError, NumericalError, ValidationError

__version__ = "0.1.0"

__all__ = ["CreaseError", "ValidationError", "ConstraintError", "DomainError", "NumericalError", "__version__"]
