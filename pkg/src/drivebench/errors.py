"""Exception types shared across the package."""


class DrivebenchError(Exception):
    """Base class for all package errors."""


class DecodeError(DrivebenchError):
    """Malformed record text; names the first offending field."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class IngestError(DrivebenchError):
    """Dataset tables are missing, malformed, or cross-linked wrong."""


class ConfigError(DrivebenchError):
    """A run or provider configuration is invalid."""


class TemplateError(DrivebenchError):
    """A prompt template does not match its placeholder contract."""


class ReportError(DrivebenchError):
    """Report inputs are incompatible (no overlap, mixed decisions, ...)."""


class ProviderError(DrivebenchError):
    """Base class for chat-backend failures."""


class AuthError(ProviderError):
    """Missing or rejected credentials; never retried."""


class RetriesExhaustedError(ProviderError):
    """All retry attempts failed; carries the last cause."""

    def __init__(self, attempts: int, cause: Exception):
        super().__init__(f"gave up after {attempts} attempts: {cause}")
        self.attempts = attempts
        self.cause = cause


class TransientProviderError(ProviderError):
    """Retryable transport failure (HTTP 429/5xx, timeout)."""


class MalformedResponseError(ProviderError):
    """Provider payload is missing an expected field; names it."""

    def __init__(self, field: str):
        super().__init__(f"provider response missing field: {field}")
        self.field = field


class ScriptKeyError(ProviderError):
    """Scripted backend has no entry for the requested key."""

    def __init__(self, key):
        super().__init__(f"no script entry for key {key!r}")
        self.key = key
