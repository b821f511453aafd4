"""Numerical experiments on heterogeneous capacities, homogenization and perforated domains."""

from .errors import DomainTooSmallError, InputError, NumericalError, ParameterError, ResolutionError

__version__ = "0.1.0"

__all__ = ["InputError", "ResolutionError", "ParameterError", "DomainTooSmallError", "NumericalError"]
