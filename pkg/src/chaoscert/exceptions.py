"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """Raised for malformed or out-of-range arguments."""


class RankViolationError(InvalidInputError):
    """Raised when an operator's numerical rank exceeds the asserted rank."""


class TruncationMismatchError(InvalidInputError):
    """Raised when objects built on different truncations are combined."""


class SymmetryError(InvalidInputError):
    """Raised by strict loaders when a kernel is not symmetric."""


class NondegeneracyWarning(UserWarning):
    """Emitted when a Gaussian target covariance is singular at truncation."""
