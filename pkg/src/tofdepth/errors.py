"""Exception hierarchy.

Three broad families, mapped to distinct CLI exit codes:
configuration problems, data/input problems, and numeric failures.
"""


class TofDepthError(Exception):
    """Base class for all package errors."""


class ConfigError(TofDepthError):
    """Invalid configuration: bad shapes, bad hyperparameters, unknown fields."""


class TopologyError(ConfigError):
    """A network layer's computed output size is invalid."""


class DataError(TofDepthError):
    """Invalid or inconsistent input data."""


class FormatError(DataError):
    """Malformed file content (PGM, JSON schema)."""


class GeometryError(DataError):
    """Degenerate marker/correspondence geometry."""


class GenerationError(DataError):
    """Synthetic scene parameters cannot produce a valid scene."""


class MetricsError(DataError):
    """Evaluation pixel set is empty or contains unusable depth values."""


class CheckpointError(DataError):
    """Checkpoint file cannot be used."""


class CorruptCheckpointError(CheckpointError):
    """Bad magic, truncated data, or inconsistent manifest."""


class UnsupportedVersionError(CheckpointError):
    """Checkpoint format version not handled by this build."""


class NumericError(TofDepthError):
    """Non-finite values encountered during compute."""


class InferenceError(NumericError):
    """Non-finite activation during a forward pass."""


class TrainingError(NumericError):
    """Non-finite loss or gradient during training."""
