"""Exception types shared across the package."""


class RestoreError(Exception):
    """Base class for all package errors."""


class InvalidInputError(RestoreError, ValueError):
    """Malformed frame, pyramid or mask."""


class ConfigError(RestoreError, ValueError):
    """Invalid pipeline configuration."""


class DegenerateWarpError(RestoreError):
    """Affine warp would collapse the object (det(A) too small)."""


class ModelStateError(RestoreError, RuntimeError):
    """Operation needs model state that has not been initialised."""


class StageError(RestoreError):
    """Wraps an error raised inside one pipeline stage."""

    def __init__(self, stage, cause):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause
