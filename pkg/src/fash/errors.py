"""Exception types shared across the package.

The CLI maps these onto exit codes: usage problems exit 2, data problems
exit 3, numerical failures exit 4.
"""


class FashError(Exception):
    """Base class for all package-specific errors."""


class InvalidArgumentError(FashError, ValueError):
    """An argument violates a documented precondition."""


class DataError(FashError):
    """Input data is malformed (parse errors, bad units, missing files)."""


class NumericError(FashError, ArithmeticError):
    """A numerical routine failed (indefinite covariance, degenerate weights)."""
