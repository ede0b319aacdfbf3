class DomainError(ValueError):
    """Raised when a special function or sampler gets arguments outside its domain."""


class ValidationError(ValueError):
    """Raised when hyperparameters or datasets violate their invariants.

    ``failures`` holds one message per offending field.
    """

    def __init__(self, failures):
        self.failures = list(failures)
        super().__init__("; ".join(self.failures))


class SamplerFault(RuntimeError):
    """A Gibbs update failed (e.g. non-PD precision matrix)."""

    def __init__(self, message, iteration=None):
        self.iteration = iteration
        if iteration is not None:
            message = f"{message} (iteration {iteration})"
        super().__init__(message)


class InferenceFault(RuntimeError):
    """A variational update produced an invalid state."""


class EMFault(RuntimeError):
    """An empirical-Bayes M-step received non-finite statistics."""


class ParseError(ValueError):
    """Malformed input file; message carries row/column location."""
