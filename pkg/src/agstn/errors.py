"""Exception taxonomy shared across the package.

Every expected failure raises a subclass of :class:`AgstnError`.  Each class
carries a stable kebab-case ``code`` (used by the CLI for machine-parseable
one-line error output) and an ``exit_code``: 2 for user-input problems, 1 for
internal errors and training divergence.
"""


class AgstnError(Exception):
    code = "error"
    exit_code = 1


class DimensionError(AgstnError):
    """Operand shapes are incompatible for the requested operation."""

    code = "dimension-error"


class DomainError(AgstnError):
    """Input is outside the mathematical domain of the operation."""

    code = "domain-error"


class ContractError(AgstnError):
    """A call violated an operation's stated contract."""

    code = "contract-error"


class EvaluationError(AgstnError):
    """A probed function produced a non-finite value."""

    code = "evaluation-error"


class SeriesTooShortError(AgstnError):
    """Time series too short for the requested decomposition."""

    code = "series-too-short"
    exit_code = 2


class EnvelopeUndefinedError(AgstnError):
    """Too few extrema to define an envelope; the caller treats the
    component as a residual."""

    code = "envelope-undefined"


class BoundsError(AgstnError):
    """A time index falls outside the available range."""

    code = "bounds-error"
    exit_code = 2


class IngestionError(AgstnError):
    """A data file failed validation; the message names the offending row."""

    code = "ingestion-error"
    exit_code = 2


class ConfigError(AgstnError):
    """A configuration file or value failed validation."""

    code = "config-error"
    exit_code = 2


class DivergenceError(AgstnError):
    """Training produced a non-finite loss."""

    code = "divergence-error"


class CheckpointError(AgstnError):
    code = "checkpoint-error"
    exit_code = 2


class CheckpointVersionError(CheckpointError):
    code = "checkpoint-version-error"


class CheckpointTruncatedError(CheckpointError):
    code = "checkpoint-truncated"


class CheckpointManifestError(CheckpointError):
    code = "checkpoint-manifest-error"
