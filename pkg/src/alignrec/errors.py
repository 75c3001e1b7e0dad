"""Exception types shared across the package."""


class AlignrecError(Exception):
    """Base class for every error raised by this package."""


class ShapeError(AlignrecError):
    """Operand shapes are incompatible with an operation."""


class ContractError(AlignrecError):
    """A caller violated an internal API contract."""


class ConfigError(AlignrecError):
    """Bad configuration value or unknown option."""


class ValidationError(AlignrecError):
    """Input data violates a documented precondition."""


class ParseError(AlignrecError):
    """Malformed input file; the message carries the offending line number."""


class SchemaError(AlignrecError):
    """Structurally valid file whose content breaks the declared schema."""


class SamplingError(AlignrecError):
    """Not enough candidates are available to satisfy a sampling request."""


class CheckpointFormatError(AlignrecError):
    """Checkpoint bytes do not look like a checkpoint."""


class CheckpointVersionError(AlignrecError):
    """Checkpoint was written by an incompatible format version."""
