"""Exception taxonomy shared by every module."""


class GeofnoError(Exception):
    """Base class for all library errors."""


class DimensionError(GeofnoError):
    """Shape or axis mismatch."""


class DTypeError(GeofnoError):
    """Unsupported or mismatched dtype."""


class KindError(GeofnoError):
    """Geometry of the wrong kind (point cloud vs structured mesh)."""


class ConditioningError(GeofnoError):
    """A required design-parameter vector is missing."""


class WeightError(GeofnoError):
    """Invalid monitor weights (non-positive or non-finite)."""


class SamplingError(GeofnoError):
    """Nyquist violation or kept modes outside the grid limits."""


class GeometryError(GeofnoError):
    """Degenerate or invalid geometric input."""


class FormatError(GeofnoError):
    """Corrupt or unsupported serialized data."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class ConfigurationError(GeofnoError):
    """Inconsistent run or model configuration."""


class DegenerateTargetError(GeofnoError):
    """Loss target with zero norm or an empty mask."""


class DivergenceError(GeofnoError):
    """Training or design optimization produced a non-finite objective."""


class SolverError(GeofnoError):
    """The reference solver failed."""


class GenerationError(GeofnoError):
    """Synthetic sample generation exhausted its retry budget."""


class EvaluationError(GeofnoError):
    """A checked evaluation produced a non-finite value."""
