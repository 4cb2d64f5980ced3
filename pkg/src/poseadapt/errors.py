"""Exception types shared across the library.

The CLI maps these onto its exit-code contract: usage/config problems -> 2,
I/O -> 3, data mismatches -> 4, numeric failures -> 5.
"""


class PoseAdaptError(Exception):
    """Base class for all library errors."""


class GeometryError(PoseAdaptError):
    """Invalid geometric input (non-invertible intrinsics, t_z <= 0, ...)."""


class ConfigurationError(PoseAdaptError):
    """Invalid configuration or parameter value."""


class NoObservationError(PoseAdaptError):
    """No valid gated depth observations; caller should skip the sample."""


class DataError(PoseAdaptError):
    """Malformed or mismatched data files."""


class GenerationError(PoseAdaptError):
    """Synthetic scene could not be generated (e.g. object outside frustum)."""


class OptimizationError(PoseAdaptError):
    """Optimization diverged. Carries the partial loss trace."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace if trace is not None else []
