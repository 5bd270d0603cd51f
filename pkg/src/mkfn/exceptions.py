"""Exception and warning types raised across the package."""


class MKFNError(Exception):
    """Base class for all errors raised by mkfn."""


class ShapeError(MKFNError, ValueError):
    pass


class InvalidDataError(MKFNError, ValueError):
    pass


class InsufficientSamplesError(InvalidDataError):
    pass


class DegenerateDataError(InvalidDataError):
    pass


class InvalidWeightError(MKFNError, ValueError):
    pass


class DomainError(MKFNError, ValueError):
    pass


class SymmetryError(MKFNError, ValueError):
    pass


class InvalidResponseError(MKFNError, ValueError):
    pass


class UnsupportedExponentError(DomainError):
    pass


class DegenerateResponseError(MKFNError, ArithmeticError):
    pass


class NumericalError(MKFNError, ArithmeticError):
    """Cholesky factorization failed even after diagonal jitter.

    ``jitter`` is the last diagonal shift that was attempted.
    """

    def __init__(self, message, jitter=0.0):
        super().__init__(f"{message} (last jitter tried: {jitter:.3e})")
        self.jitter = jitter


class StepSizeError(MKFNError, ArithmeticError):
    pass


class UndefinedMetricError(MKFNError, ValueError):
    pass


class FormatError(MKFNError, ValueError):
    """Malformed input file. ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        self.message = message
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class VersionError(FormatError):
    pass


class GridSearchError(MKFNError, RuntimeError):
    """Every grid cell failed; ``failures`` maps cell -> error message."""

    def __init__(self, message, failures):
        super().__init__(message)
        self.failures = failures


class DegenerateResponseWarning(UserWarning):
    pass


class SymmetrizedWarning(UserWarning):
    pass


class EmptyGroupWarning(UserWarning):
    pass
