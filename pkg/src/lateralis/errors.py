"""Exception types shared across the package."""


class LateralisError(Exception):
    """Base class for every package-specific error."""


class MalformedFileError(LateralisError):
    """A binary batch file is not a whole number of records."""


class InvalidLabelError(LateralisError):
    """A label byte falls outside the valid class range."""


class InvalidPatchSizeError(LateralisError):
    """Requested patch side length cannot be cut from a 32x32 image."""


class EmptySourceError(LateralisError):
    """An operation needing input rows received none."""


class DimensionMismatchError(LateralisError):
    """Input dimensionality does not match a fitted model."""


class InsufficientDataError(LateralisError):
    """Fewer data rows than the operation requires."""


class InsufficientSampleError(LateralisError):
    """Too few activation vectors to estimate statistics."""


class InvalidSizeError(LateralisError):
    """A layer size parameter is out of range."""


class InvalidNeighborhoodError(LateralisError):
    """Neighborhood size must be between 1 and K-1 inclusive."""


class MapTooSmallError(LateralisError):
    """Feature map is too small to split into four pooling regions."""


class FoldInfeasibleError(LateralisError):
    """Some class has fewer samples than the requested fold count."""


class DivergenceError(LateralisError):
    """Training produced a non-finite loss.

    Carries the 1-based epoch at which divergence was detected.
    """

    def __init__(self, epoch, message=None):
        self.epoch = epoch
        super().__init__(message or f"non-finite loss at epoch {epoch}")


class SerializationError(LateralisError):
    """An artifact container is truncated, corrupt, or of the wrong kind."""


class ConfigError(LateralisError):
    """Experiment configuration failed validation (CLI exit code 2)."""


class DependencyError(LateralisError):
    """An upstream stage artifact is missing or corrupt (CLI exit code 3).

    Carries the name of the stage to rerun.
    """

    def __init__(self, stage, message=None):
        self.stage = stage
        super().__init__(message or f"missing or corrupt artifact; rerun stage '{stage}'")
