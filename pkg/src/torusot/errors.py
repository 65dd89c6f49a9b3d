"""Exception types shared across the package."""


class ArgumentError(ValueError):
    """An operation was called with arguments violating its preconditions."""


class CapacityError(RuntimeError):
    """A request would exceed a configured memory/size budget."""

    def __init__(self, message, count=None):
        super().__init__(message)
        self.count = count


class NumericError(RuntimeError):
    """A numerical routine failed to converge or produced invalid values."""

    def __init__(self, message, residual=None, best=None):
        super().__init__(message)
        self.residual = residual
        self.best = best


class DivergenceError(ArgumentError):
    """A series or limit requested in a regime where it diverges."""


class ValidationError(ValueError):
    """A configuration failed validation; carries the list of violations."""

    def __init__(self, violations):
        super().__init__("invalid configuration: " + "; ".join(violations))
        self.violations = list(violations)
