"""Exception types shared across the package."""


class InputError(ValueError):
    """Invalid argument, shape or parameter range."""


class ResolutionError(InputError):
    """The requested geometry cannot be resolved at the chosen grid spacing."""


class ParameterError(InputError):
    """Inconsistent structural parameters (dyadic annuli, recovery radii, ...)."""


class DomainTooSmallError(InputError):
    """No perforation of the lattice meets the domain."""


class NumericalError(ArithmeticError):
    """Non-finite values or an indefinite result from a numerical routine."""
