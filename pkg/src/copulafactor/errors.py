"""Exception types shared across the package."""


class InputError(ValueError):
    """Invalid data, configuration or arguments supplied by the caller."""


class NumericalError(ArithmeticError):
    """A numerical routine failed (e.g. a factorization that should not fail)."""
