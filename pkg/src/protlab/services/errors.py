"""Exceptions raised by the external-data clients (THPA, PubMed)."""

from ..core.errors import NetworkError, ProtlabError


class ServiceError(ProtlabError):
    """Base exception for external-data client errors."""

    pass


class ProteinNotFound(ServiceError):
    """Raised when The Human Protein Atlas has no entry for a symbol."""

    def __init__(self, symbol: str):
        self.symbol = symbol
        super().__init__(f"Protein not found in The Human Protein Atlas: {symbol!r}")


class MalformedResponse(ServiceError):
    """Raised when a service answers with a body that cannot be parsed."""

    pass


class ZeroResults(ServiceError):
    """Raised when a PubMed search returns no articles."""

    def __init__(self, query: str):
        self.query = query
        super().__init__(f"PubMed search returned no articles for {query!r}")


__all__ = ["MalformedResponse", "NetworkError", "ProteinNotFound", "ServiceError", "ZeroResults"]
