"""Exceptions raised by the LLM client, templates and parsers."""

from typing import Optional

from ..core.errors import NetworkError, ProtlabError


class LLMError(ProtlabError):
    """Base exception for LLM errors."""

    pass


class UnknownTemplate(LLMError):
    """Raised when a prompt template id is not registered."""

    pass


class MissingSlot(LLMError):
    """Raised when a template is rendered without a required slot."""

    def __init__(self, slot: str, template_id: str = ""):
        self.slot = slot
        self.template_id = template_id
        super().__init__(f"Missing slot {slot!r} for template {template_id!r}")


class ReplayMiss(LLMError):
    """Raised when replay mode has no recorded response for a request."""

    def __init__(self, request_hash: str, template_id: str, prompt: str):
        self.request_hash = request_hash
        self.template_id = template_id
        self.prompt = prompt
        super().__init__(
            f"No recording for template {template_id!r} (hash {request_hash[:16]}...). "
            f"Re-record with --transport record."
        )


class ProviderError(LLMError):
    """Raised when the chat endpoint rejects a request (non-2xx with body)."""

    pass


class ParseFailure(LLMError):
    """Raised when a response does not follow the required format."""

    def __init__(self, message: str, section: Optional[str] = None):
        self.section = section
        super().__init__(message)


class OutOfRange(ParseFailure):
    """Raised when a parsed score lies outside 0..5."""

    pass


class CountMismatch(ParseFailure):
    """Raised when a comma-separated list has the wrong number of entries."""

    def __init__(self, expected: int, got: int):
        self.expected = expected
        self.got = got
        super().__init__(f"Expected {expected} entries, got {got}")


class RetriesExhausted(LLMError):
    """Raised when every attempt of a parse-retry loop failed."""

    def __init__(self, template_id: str, attempts: int, last_raw: str, last_error: Exception):
        self.template_id = template_id
        self.attempts = attempts
        self.last_raw = last_raw
        self.last_error = last_error
        super().__init__(
            f"Template {template_id!r} failed to parse after {attempts} attempt(s): {last_error}"
        )


__all__ = [
    "CountMismatch",
    "LLMError",
    "MissingSlot",
    "NetworkError",
    "OutOfRange",
    "ParseFailure",
    "ProviderError",
    "ReplayMiss",
    "RetriesExhausted",
    "UnknownTemplate",
]
