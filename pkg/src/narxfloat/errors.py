"""Exception hierarchy shared across the package."""


class NarxFloatError(Exception):
    """Base class for all package errors."""


class SpecificationError(NarxFloatError, ValueError):
    """Invalid model spec, term, signal or configuration value."""


class InsufficientDataError(NarxFloatError, ValueError):
    """Too few samples for the requested lags or split."""


class DegenerateOutputError(NarxFloatError, ValueError):
    """The output vector has zero energy, so ERR is undefined."""


class InstabilityError(NarxFloatError, ArithmeticError):
    """A recursion or integration diverged.

    ``index`` is the sample where divergence was detected; ``partial`` carries
    whatever partial result the caller may still want (e.g. a partial MSE).
    """

    def __init__(self, message, index=None, partial=None):
        super().__init__(message)
        self.index = index
        self.partial = partial


class BudgetError(NarxFloatError, RuntimeError):
    """An exhaustive evaluation or search exceeded its configured budget."""
