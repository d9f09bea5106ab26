"""Exception types shared across the package."""


class RelightError(Exception):
    """Base class for all package errors."""


class ConfigurationError(RelightError):
    """Invalid configuration: empty light library, degenerate geometry, bad hyperparameters."""


class ShapeError(RelightError):
    """Array shape does not match the declared contract."""


class DataFormatError(RelightError):
    """On-disk payload is corrupt, truncated, or contradicts its sidecar."""


class CheckpointError(RelightError):
    """Checkpoint archive is missing, malformed, or incompatible with this build."""


class EvaluationError(RelightError):
    """Metric computation cannot proceed (e.g. empty foreground mask)."""


class TrainingDivergence(RelightError):
    """Non-finite loss encountered; a diagnostic snapshot is written before raising."""
