"""
Root of the protlab exception hierarchy.

Every module defines its own family of errors below ProtlabError so callers
(the CLI in particular) can catch by category.
"""


class ProtlabError(Exception):
    """Base exception for all protlab errors."""

    pass


class UsageError(ProtlabError):
    """Raised for invalid command-line usage."""

    pass


class ConfigError(ProtlabError):
    """Raised when configuration is missing, unreadable or inconsistent."""

    pass


class NetworkError(ProtlabError):
    """Raised when a network request fails or is refused (offline/replay)."""

    pass
