"""Exception taxonomy shared across the package.

Everything raised on purpose derives from ElinkError so callers can
catch one base type at batch boundaries. Precondition violations on
plain arguments raise ValueError instead.
"""


class ElinkError(Exception):
    """Base class for all package-specific failures."""


class IoError(ElinkError):
    """Dataset file missing or unreadable."""


class SchemaError(ElinkError):
    """A dataset record does not match the expected shape."""

    def __init__(self, message, line=None, field=None):
        super().__init__(message)
        self.line = line  # 1-based line number in the source file
        self.field = field


class SpanError(ElinkError):
    """Mention offsets disagree with the document text."""


class MissingGoldError(ElinkError):
    """Operation needs a gold QID the mention does not carry."""


class NetworkError(ElinkError):
    """Transport-level failure talking to an upstream service."""


class RateLimitError(NetworkError):
    """Upstream throttled us; retry_after is seconds or None."""

    def __init__(self, message, retry_after=None):
        super().__init__(message)
        self.retry_after = retry_after


class AuthError(ElinkError):
    """Missing or rejected credentials."""


class UpstreamSchemaError(ElinkError):
    """Upstream responded 200 but the payload shape is wrong."""


class NotFoundError(ElinkError):
    """Entity id does not exist upstream."""


class InputTooLongError(ElinkError):
    """Constructed user message exceeds the input token budget."""


class ParseError(ElinkError):
    """Model output did not contain the required JSON shape."""


class ReplayMissError(ElinkError):
    """Replay cassette has no entry for the request hash."""

    def __init__(self, request_hash):
        super().__init__(f"no cassette entry for request hash {request_hash}")
        self.request_hash = request_hash


class ProviderError(ElinkError):
    """Embedding provider returned an error or malformed payload."""


class DimensionMismatchError(ElinkError):
    """Embedding vectors to compare have different lengths."""


class KeyMismatchError(ElinkError):
    """Paired per-mention mappings do not cover the same mention ids."""
