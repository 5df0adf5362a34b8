"""Desk-scale simulation toolkit for bichromatic optical lattices."""
from .errors import DomainError

__version__ = "0.1.0"
__all__ = ["DomainError", "__version__"]
