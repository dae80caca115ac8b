"""Exception hierarchy shared across the package."""


class SnnAdvError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(SnnAdvError):
    """Tensor shapes incompatible with the requested operation."""


class EvaluationError(SnnAdvError):
    """A computation produced (or was fed) non-finite values."""


class IndexRangeError(SnnAdvError):
    """A class label or index falls outside its valid range."""


class ConfigError(SnnAdvError):
    """Invalid configuration value or unknown configuration key."""


class FormatError(SnnAdvError):
    """Malformed binary file (IDX dataset or checkpoint)."""


class TrainingError(SnnAdvError):
    """Training diverged or was asked to run on unusable data."""


class StateError(SnnAdvError):
    """Forward trace does not match the network it is replayed through."""


class UnsupportedError(SnnAdvError):
    """Model structure outside what an operation supports."""


class SelectionError(SnnAdvError):
    """Evaluation-set construction could not satisfy its constraints."""
