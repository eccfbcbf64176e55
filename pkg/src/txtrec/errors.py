"""Exception hierarchy for txtrec.

Every error carries a short ``category`` that the CLI prints in front of the
message, so operators can tell a bad input file from a diverging training run.
"""


class TxtError(Exception):
    """Base class for all txtrec errors."""

    category = "error"


class DimensionError(TxtError, ValueError):
    """Tensor or array shapes do not fit an operation."""

    category = "dimension"


class SequenceLengthError(DimensionError):
    """A sequence is longer than the configured maximum length."""

    category = "sequence-length"


class VocabularyError(TxtError, ValueError):
    """An id or label lies outside its vocabulary."""

    category = "vocabulary"


class ContractError(TxtError, ValueError):
    """A caller violated a documented precondition."""

    category = "contract"


class ConfigError(TxtError, ValueError):
    """A configuration value or key is invalid."""

    category = "config"


class FormatError(TxtError, ValueError):
    """A file or message does not follow its documented format."""

    category = "format"


class ChecksumError(FormatError):
    """Stored content does not match its checksum."""

    category = "checksum"


class TrainingError(TxtError, RuntimeError):
    """Training cannot continue, e.g. because a gradient is not finite."""

    category = "training"
