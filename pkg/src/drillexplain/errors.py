"""Exception hierarchy shared across the pipeline.

The CLI maps these onto exit codes: usage problems exit 1, data problems
exit 2, anything else exits 3.
"""


class DrillExplainError(Exception):
    """Base class for all pipeline errors."""


class UsageError(DrillExplainError):
    """Caller violated an API contract (wrong width, mixed channels, ...)."""


class ConfigError(UsageError):
    """Invalid configuration value."""


class CapacityError(UsageError):
    """Request exceeds a hard size limit (e.g. exhaustive enumeration)."""


class DataError(DrillExplainError):
    """Input data violates a format or content contract."""


class SchemaError(DataError):
    """A required column or field is missing."""


class FormatError(DataError):
    """A file is structurally malformed (non-monotonic time, bad version)."""


class GapError(DataError):
    """A channel has no valid sample at or before the resampling grid start."""


class WindowError(DataError):
    """Not enough history to cut the requested window."""


class TrainingError(DrillExplainError):
    """Model training cannot proceed (single-class labels, divergence)."""


class ModelIntegrityError(DrillExplainError):
    """A serialized or in-memory model violates its invariants."""


class EvaluationError(DrillExplainError):
    """An evaluation protocol precondition is not met."""


class EmbeddingError(DrillExplainError):
    """t-SNE cannot embed the given distance matrix."""


class ArtifactError(DataError):
    """A pipeline artifact is missing or has an incompatible version."""
