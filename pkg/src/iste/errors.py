"""Exception types shared across the package."""


class IsteError(Exception):
    """Base class for all package errors."""


class ShapeError(IsteError):
    """Tensor shapes do not satisfy an operation's contract."""


class ConfigError(IsteError):
    """Invalid configuration value."""


class RangeError(IsteError):
    """A value lies outside its allowed domain (e.g. coordinates, scales)."""


class NonFiniteError(IsteError):
    """A NaN or Inf was produced where only finite values are allowed."""


class CheckpointError(IsteError):
    """Checkpoint file is corrupted, wrong version, or config-incompatible."""


class CorpusError(IsteError):
    """Image corpus is missing, empty, or unreadable."""


class TrainingDivergedError(IsteError):
    """Training aborted on a non-finite loss."""
