"""Exception types shared across the package."""


class InvalidArgumentError(ValueError):
    """An input violates an operation's precondition."""


class ResourceLimitError(RuntimeError):
    """An exact computation would exceed the enumeration guard."""


class NumericalFailureError(ArithmeticError):
    """A solve was singular or an iterate became non-finite."""


class UnsupportedError(RuntimeError):
    """The requested computation is not available for this input."""
