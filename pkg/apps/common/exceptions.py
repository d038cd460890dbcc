"""
Exception hierarchy shared by the numerical apps.

Every error carries the CLI exit status it maps to: configuration and
precondition problems exit with 2, hypothesis and solver failures with 3.
"""


class LabError(Exception):
    """Base class for all laboratory errors."""

    exit_code = 3

    def __init__(self, message: str = ''):
        super().__init__(message)
        self.message = message


class InvalidDimensionError(LabError):
    exit_code = 2


class DomainError(LabError):
    """A point lies outside the closed ball."""


class SingularityError(LabError):
    """The kernel was evaluated on the diagonal x = y."""


class EmptyRuleError(LabError):
    """No grid node falls strictly inside the domain."""

    exit_code = 2


class LayoutMismatchError(LabError):
    """Fields or rules built on different grids were combined."""


class PreconditionError(LabError):
    exit_code = 2


class NotAContractionError(LabError):
    """A contraction factor q >= 1 was supplied."""


class NonConvergenceError(LabError):
    """Picard iteration exceeded its iteration cap without meeting the tolerance."""


class InsufficientHistoryError(LabError):
    pass


class HypothesisViolationError(LabError):
    """A theorem hypothesis does not hold for the sampled ensemble."""


class DegenerateDistributionError(LabError):
    pass


class SampleFailureError(LabError):
    """A single ensemble sample failed; carries its index for reproduction."""

    def __init__(self, sample_index: int, cause: LabError):
        super().__init__(f"Sample {sample_index} failed: {cause.message or cause}")
        self.sample_index = sample_index
        self.cause = cause
