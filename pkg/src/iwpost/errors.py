"""Exception types shared across the library."""


class NumericError(ArithmeticError):
    """A computation produced NaN or lost all probability mass."""


class CapabilityError(RuntimeError):
    """An operation requires an optional model capability that is absent."""


class DiagnosticError(RuntimeError):
    """A sanity check on an intermediate quantity failed.

    Typically means the evaluation grid is too small or a sample count
    is too low for the requested computation, not a bug in the inputs.
    """


class DivergenceError(RuntimeError):
    """Stochastic optimization produced a non-finite estimate.

    Carries the partial ``trace`` and the last finite ``proposal`` so a
    caller can report progress up to the failure.
    """

    def __init__(self, message, trace=None, proposal=None):
        super().__init__(message)
        self.trace = trace
        self.proposal = proposal
