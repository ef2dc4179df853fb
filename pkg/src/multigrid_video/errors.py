"""Exception types shared across the package."""


class MultigridError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(MultigridError, ValueError):
    """Invalid configuration value or unknown configuration key."""


class GridError(MultigridError, ValueError):
    """Invalid sampling grid (e.g. a grid that produces an empty output)."""


class GridBoundsError(GridError):
    """Sampling grid extends outside the source clip."""


class ShapeError(MultigridError, ValueError):
    """Tensor shape incompatible with an operation."""


class ClipbinError(MultigridError, ValueError):
    """Malformed CLIPBIN file."""


class CheckpointError(MultigridError, ValueError):
    """Malformed or incompatible checkpoint file."""


class AccountingError(MultigridError, ValueError):
    """Plans are not comparable (different base recipe or dataset)."""


class TrainingDivergedError(MultigridError, RuntimeError):
    """Loss became non-finite during training."""
