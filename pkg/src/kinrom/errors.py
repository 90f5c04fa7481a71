"""Exception types shared across the package.

The CLI maps these onto exit codes: argument/config problems -> 2,
numerical failures -> 3, file format and I/O problems -> 4.
"""


class KinromError(Exception):
    """Base class for all package errors."""


class InvalidArgument(KinromError, ValueError):
    """An argument violates a documented precondition."""


class EmptySliceError(InvalidArgument):
    """A time-interval slice selected no snapshot columns."""


class InsufficientData(InvalidArgument):
    """Not enough data points for the requested operation."""


class NumericalFailure(KinromError, RuntimeError):
    """An iterative numerical procedure failed to converge or blew up."""

    def __init__(self, message, *, residual=None, iteration=None):
        super().__init__(message)
        self.residual = residual
        self.iteration = iteration


class ConditioningError(NumericalFailure):
    """A linear system was too ill-conditioned to solve reliably."""

    def __init__(self, message, *, condition_number=None):
        super().__init__(message)
        self.condition_number = condition_number


class FormatError(KinromError):
    """A binary or manifest file does not match the expected layout."""

    def __init__(self, message, *, offset=None):
        super().__init__(message)
        self.offset = offset


class UnsupportedVersion(FormatError):
    """A file declares a format version this reader does not know."""


class ConfigError(KinromError):
    """Run configuration failed validation.

    ``violations`` lists every problem found, not just the first.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class HashMismatchError(KinromError):
    """Provenance hashes of bundle and snapshot inputs disagree."""
