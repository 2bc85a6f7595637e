"""
The Human Protein Atlas lookup.

A symbol is resolved to an Ensembl gene id through the search_download
endpoint, then the gene's JSON entry supplies protein classes, biological
processes (pathways), molecular functions and the cancers in which the
protein is a favorable or unfavorable prognostic marker.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any, Optional

from .errors import MalformedResponse, ProteinNotFound
from .http_cache import RecordedHttpClient

logger = logging.getLogger(__name__)

THPA_BASE_URL = "https://www.proteinatlas.org"
SEARCH_PATH = "/api/search_download.php"
PROGNOSTIC_PREFIX = "Pathology prognostics - "


@dataclass(frozen=True)
class ThpaEntry:
    symbol: str
    ensembl_id: str
    protein_classes: tuple[str, ...]
    pathways: tuple[str, ...]
    molecular_functions: tuple[str, ...]
    favorable_cancers: tuple[str, ...]
    unfavorable_cancers: tuple[str, ...]

    def sections(self) -> dict[str, tuple[str, ...]]:
        return {
            "Protein classes": self.protein_classes,
            "Biological pathways": self.pathways,
            "Molecular functions": self.molecular_functions,
            "Cancers with favorable prognosis": self.favorable_cancers,
            "Cancers with unfavorable prognosis": self.unfavorable_cancers,
        }

    def to_text(self) -> str:
        lines = [f"{self.symbol} ({self.ensembl_id})"]
        for title, values in self.sections().items():
            lines.append(f"{title}: {', '.join(values) if values else 'none reported'}")
        return "\n".join(lines)


def _as_list(value: Any) -> tuple[str, ...]:
    if value is None:
        return ()
    if isinstance(value, str):
        return (value,) if value else ()
    if isinstance(value, list):
        return tuple(str(v) for v in value if v)
    raise MalformedResponse(f"Expected a list of strings, got {type(value).__name__}")


def parse_gene_entry(symbol: str, entry: Any) -> ThpaEntry:
    """Build a ThpaEntry from a gene JSON document."""
    if isinstance(entry, list) and len(entry) == 1:
        entry = entry[0]
    if not isinstance(entry, dict):
        raise MalformedResponse(f"THPA entry for {symbol!r} is not a JSON object")
    ensembl_id = entry.get("Ensembl")
    if not ensembl_id:
        raise MalformedResponse(f"THPA entry for {symbol!r} has no Ensembl id")

    favorable, unfavorable = [], []
    for key, value in sorted(entry.items()):
        if not key.startswith(PROGNOSTIC_PREFIX) or not isinstance(value, dict):
            continue
        if not value.get("is_prognostic"):
            continue
        cancer = key[len(PROGNOSTIC_PREFIX):]
        kind = str(value.get("prognostic type", "")).lower()
        if kind == "favorable":
            favorable.append(cancer)
        elif kind == "unfavorable":
            unfavorable.append(cancer)

    return ThpaEntry(
        symbol=str(entry.get("Gene") or symbol),
        ensembl_id=str(ensembl_id),
        protein_classes=_as_list(entry.get("Protein class")),
        pathways=_as_list(entry.get("Biological process")),
        molecular_functions=_as_list(entry.get("Molecular function")),
        favorable_cancers=tuple(favorable),
        unfavorable_cancers=tuple(unfavorable),
    )


class ThpaClient:
    def __init__(self, http: RecordedHttpClient, base_url: str = THPA_BASE_URL):
        self.http = http
        self.base_url = base_url.rstrip("/")

    def resolve(self, symbol: str) -> str:
        """Ensembl gene id for a symbol (exact gene name or synonym match)."""
        record = self.http.get(
            f"{self.base_url}{SEARCH_PATH}",
            {"search": symbol, "format": "json", "columns": "g,gs,eg", "compress": "no"},
        )
        if record.status == 404:
            raise ProteinNotFound(symbol)
        rows = record.json()
        if not isinstance(rows, list):
            raise MalformedResponse("THPA search did not return a JSON list")
        wanted = symbol.strip().upper()
        synonym_hit: Optional[str] = None
        for row in rows:
            if not isinstance(row, dict):
                raise MalformedResponse("THPA search rows must be JSON objects")
            if str(row.get("Gene", "")).upper() == wanted and row.get("Ensembl"):
                return str(row["Ensembl"])
            synonyms = [s.upper() for s in _as_list(row.get("Gene synonym"))]
            if synonym_hit is None and wanted in synonyms and row.get("Ensembl"):
                synonym_hit = str(row["Ensembl"])
        if synonym_hit:
            return synonym_hit
        raise ProteinNotFound(symbol)

    def lookup(self, symbol: str) -> ThpaEntry:
        """
        Fetch the five annotation fields for a protein symbol.

        Raises:
            ProteinNotFound, MalformedResponse, NetworkError
        """
        if not symbol or not symbol.strip():
            raise ValueError("Protein symbol must be nonempty")
        ensembl_id = self.resolve(symbol)
        record = self.http.get(f"{self.base_url}/{ensembl_id}.json")
        if record.status == 404:
            raise ProteinNotFound(symbol)
        if record.status >= 400:
            raise MalformedResponse(f"THPA returned status {record.status} for {ensembl_id}")
        entry = parse_gene_entry(symbol, record.json())
        logger.info(f"[HTTP] THPA entry for {symbol}: {ensembl_id}")
        return entry
