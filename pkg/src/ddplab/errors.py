"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid parameters at construction time (bad ranges, non-divisible grids, ...)."""


class TrainingError(RuntimeError):
    """Training diverged or was handed unusable data."""

    def __init__(self, message, epoch=None):
        super().__init__(message if epoch is None else f"{message} (epoch {epoch})")
        self.epoch = epoch


class IntegrationError(RuntimeError):
    """An integrator produced non-finite values or was driven outside its domain."""


class StageError(RuntimeError):
    """A pipeline stage failed; carries the stage name for CLI reporting."""

    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
