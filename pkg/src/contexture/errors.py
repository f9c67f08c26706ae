"""Exception types shared across the package."""


class NumericalError(RuntimeError):
    """A computation failed for numerical reasons (not a usage error)."""


class DivergenceError(NumericalError):
    """A variational solve kept increasing its objective.

    Carries the objective trace so the failure can be inspected.
    """

    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = list(trace) if trace is not None else []


class ConstraintViolationError(ValueError):
    """An encoder violates the constraint its objective assumes."""
