"""Exception hierarchy shared across the harness.

The CLI maps these to distinct exit codes (config=2, ingestion=3,
provider=4) so CI pipelines can tell failure classes apart.
"""


class OmniBenchError(Exception):
    """Base class for all harness errors."""


class ConfigError(OmniBenchError):
    """Invalid configuration, flags, templates, or relation metadata."""


class IngestionError(OmniBenchError):
    """Corpus, triple-file, or dataset input could not be ingested."""


class ProviderError(OmniBenchError):
    """Remote provider failure (embeddings or chat completions)."""

    def __init__(self, message: str, *, status: int | None = None, retryable: bool = False):
        super().__init__(message)
        self.status = status
        self.retryable = retryable


class ProtocolError(ProviderError):
    """Provider answered, but the payload violates the wire contract."""

    def __init__(self, message: str, *, status: int | None = None):
        super().__init__(message, status=status, retryable=False)


class KBLoadError(OmniBenchError):
    """Base class for knowledge-base deserialization failures."""


class KBBadMagicError(KBLoadError):
    pass


class KBVersionError(KBLoadError):
    pass


class KBTruncatedError(KBLoadError):
    pass


class KBChecksumError(KBLoadError):
    pass


class DegenerateMeasurementError(OmniBenchError):
    """A resource denominator was zero or below epsilon; ratios undefined."""
