"""Exception types shared across the package."""


class DsrError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(DsrError, ValueError):
    """An argument violates a documented precondition."""


class DegenerateDataError(DsrError, ValueError):
    """Input data has no usable variation (e.g. a constant dimension)."""


class DivergenceError(DsrError, RuntimeError):
    """A simulated or generated orbit left the finite/bounded regime.

    ``last_valid_index`` is the index of the last state that was still finite.
    """

    def __init__(self, message: str, last_valid_index: int = -1):
        super().__init__(message)
        self.last_valid_index = last_valid_index


class UnsupportedDimensionError(DsrError, ValueError):
    """Requested operation is not defined for this dimensionality."""


class TrainingFailureError(DsrError, RuntimeError):
    """Training produced a non-finite loss. Carries epoch/step context."""

    def __init__(self, message: str, epoch: int = -1, step: int = -1, partial=None):
        super().__init__(message)
        self.epoch = epoch
        self.step = step
        self.partial = partial


class InvalidModelError(DsrError, ValueError):
    """A model does not satisfy the preconditions of the requested analysis."""


class UndefinedReferenceError(DsrError, RuntimeError):
    """Reference graphs for a normalized index are degenerate."""


class ConfigurationError(DsrError, ValueError):
    """An experiment configuration is missing or inconsistent."""


class MaskParseError(DsrError, ValueError):
    """A mask file could not be parsed. Carries line context."""

    def __init__(self, message: str, line_no: int = -1):
        super().__init__(message)
        self.line_no = line_no
