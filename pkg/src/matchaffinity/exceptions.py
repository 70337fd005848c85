"""Exception types shared across the package."""


class MatchAffinityError(Exception):
    """Base class for all package-specific errors."""


class DataError(MatchAffinityError):
    """Raised when input data cannot be turned into a valid market sample.

    Covers missing columns, zero-variance traits, empty samples and
    malformed schemas.
    """


class IdentificationError(MatchAffinityError):
    """Raised when a parameter cannot be identified from the data.

    Examples: a categorical variable with a single observed label, or a
    degenerate sample with fewer than two couples.
    """


class ConvergenceError(MatchAffinityError):
    """Raised when an iterative solver stops short of its tolerance."""

    def __init__(self, message: str, residual: float = float("nan"),
                 iterations: int = 0):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class NormalizationError(MatchAffinityError):
    """Raised when the social gain is non-positive and the unit-surplus
    rescaling is therefore undefined."""


class InferenceError(MatchAffinityError):
    """Raised when bootstrap resampling fails too often to be trusted."""
