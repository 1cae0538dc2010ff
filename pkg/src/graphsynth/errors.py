"""Exception types shared across pipeline stages."""


class GraphSynthError(Exception):
    """Base class for all pipeline errors."""


class IngestError(GraphSynthError):
    """Malformed corpus input record (message names the offending line)."""


class DuplicateIdError(IngestError):
    """An identifier that must be unique within the corpus appeared twice."""


class FormatError(GraphSynthError):
    """A backend returned output that does not match the expected schema."""

    def __init__(self, message: str, raw: str | None = None):
        super().__init__(message)
        self.raw = raw


class BackendError(GraphSynthError):
    """A backend call failed. ``retryable`` marks transient faults."""

    def __init__(self, message: str, retryable: bool = False):
        super().__init__(message)
        self.retryable = retryable


class IntegrityError(GraphSynthError):
    """Cross-artifact references or cached state are inconsistent."""


class ConfigurationError(GraphSynthError):
    """A configuration value violates a stage precondition."""
