"""Exception taxonomy shared across the pipeline.

The CLI maps these onto exit codes: ConfigError -> 1, TransportError and
FailureThresholdExceeded -> 2, DataError and its subclasses -> 3.
"""


class EntailforgeError(Exception):
    """Base class for all library errors."""


class ConfigError(EntailforgeError):
    """Invalid configuration or unusable run parameters."""


class DataError(EntailforgeError):
    """Malformed records, unknown labels, empty text fields."""


class TemplateMismatch(DataError):
    """A label-embedded hypothesis does not match the canonical template."""


class EmptyGeneration(DataError):
    """Generator output contained no usable hypothesis text."""


class TransportError(EntailforgeError):
    """HTTP backend unreachable or non-200 after retries."""


class ProtocolViolation(EntailforgeError):
    """Backend response body violates the wire contract."""


class DimensionMismatch(EntailforgeError):
    """Vector or parameter shape does not match the declared dimension."""


class FailureThresholdExceeded(TransportError):
    """Too many per-item generation failures in one batch run."""


class NonFiniteLoss(EntailforgeError):
    """Training loss became NaN or Inf."""
