"""Exception types shared across the package.

The CLI maps these onto exit codes: validation problems exit 2,
numeric failures exit 3, usage mistakes exit 4.
"""


class ShapeMismatchError(ValueError):
    """Operands have incompatible shapes for the requested operation."""


class ContractError(ValueError):
    """A call violated a documented precondition (empty input, non-scalar loss, ...)."""


class ValidationError(ValueError):
    """Input data failed a structural check (bad adjacency, duplicate rows, ...)."""


class NumericError(ArithmeticError):
    """A computation produced non-finite values or an unsolvable system."""
