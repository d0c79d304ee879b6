"""Exception hierarchy. Everything raised on purpose derives from HdrrError."""


class HdrrError(Exception):
    """Base class for all library errors."""


class DimensionError(HdrrError):
    """Operand shapes are incompatible for the requested operation."""


class ConfigError(HdrrError):
    """A configuration value violates its documented constraints."""


class DataFormatError(HdrrError):
    """A binary or text data file is malformed."""


class ManifestError(HdrrError):
    """A dataset manifest failed to parse or validate."""


class UsageError(HdrrError):
    """An API precondition was violated by the caller."""


class TrainingError(HdrrError):
    """Training aborted (non-finite loss or gradient)."""


class EvaluationError(HdrrError):
    """Metric evaluation received unusable inputs."""
