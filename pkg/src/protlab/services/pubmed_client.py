"""
PubMed search over NCBI E-utilities.

1. esearch  - relevance-sorted PMIDs for a query (JSON)
2. efetch   - titles and abstracts for those PMIDs (XML)

NCBI_API_KEY is sent when set; it never enters recordings.
"""

from __future__ import annotations

import logging
import os
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from typing import Optional

from .errors import MalformedResponse, ZeroResults
from .http_cache import RecordedHttpClient

logger = logging.getLogger(__name__)

EUTILS_BASE_URL = "https://eutils.ncbi.nlm.nih.gov/entrez/eutils"
MIN_LIMIT = 10
MAX_LIMIT = 20


@dataclass(frozen=True)
class PubMedArticle:
    pmid: str
    title: str
    abstract: str = ""

    def __post_init__(self) -> None:
        if not self.pmid.isdigit():
            raise ValueError(f"PMID must be numeric, got {self.pmid!r}")
        if not self.title:
            raise ValueError(f"Article {self.pmid} has no title")

    def to_text(self) -> str:
        abstract = self.abstract or "(no abstract available)"
        return f"PMID: {self.pmid}\nTitle: {self.title}\nAbstract: {abstract}"


def format_articles(articles: list[PubMedArticle]) -> str:
    """Reference block for the literature prompts."""
    if not articles:
        return "No articles found."
    return "\n\n".join(a.to_text() for a in articles)


def _xml_text(elem: ET.Element, path: str) -> Optional[str]:
    found = elem.find(path)
    if found is None:
        return None
    text = "".join(found.itertext()).strip()
    return text or None


def parse_efetch_xml(xml_text: str) -> list[PubMedArticle]:
    """Articles from an efetch PubmedArticleSet document."""
    try:
        root = ET.fromstring(xml_text)
    except ET.ParseError as e:
        raise MalformedResponse(f"Failed to parse efetch XML: {e}")

    articles = []
    for article_elem in root.findall(".//PubmedArticle"):
        pmid = _xml_text(article_elem, ".//PMID")
        title = _xml_text(article_elem, ".//ArticleTitle")
        if not pmid or not title:
            logger.warning(f"[HTTP] Skipping PubMed record without PMID or title (PMID={pmid})")
            continue

        # Abstract - may have multiple labelled sections
        parts = []
        for abs_elem in article_elem.findall(".//AbstractText"):
            label = abs_elem.get("Label", "")
            text = "".join(abs_elem.itertext()).strip()
            if label and text:
                parts.append(f"{label}: {text}")
            elif text:
                parts.append(text)
        articles.append(PubMedArticle(pmid=pmid, title=title, abstract=" ".join(parts)))
    return articles


class PubMedClient:
    def __init__(self, http: RecordedHttpClient, base_url: str = EUTILS_BASE_URL, api_key: Optional[str] = None):
        self.http = http
        self.base_url = base_url.rstrip("/")
        self.api_key = api_key if api_key is not None else os.environ.get("NCBI_API_KEY")

    def esearch(self, query: str, limit: int) -> list[str]:
        record = self.http.get(
            f"{self.base_url}/esearch.fcgi",
            {
                "db": "pubmed",
                "term": query,
                "retmax": limit,
                "retmode": "json",
                "sort": "relevance",
                "api_key": self.api_key,
            },
        )
        data = record.json()
        try:
            idlist = data["esearchresult"]["idlist"]
        except (KeyError, TypeError):
            raise MalformedResponse("esearch response has no esearchresult.idlist")
        if not isinstance(idlist, list):
            raise MalformedResponse("esearch idlist is not a list")
        return [str(pmid) for pmid in idlist]

    def efetch(self, pmids: list[str]) -> list[PubMedArticle]:
        record = self.http.get(
            f"{self.base_url}/efetch.fcgi",
            {
                "db": "pubmed",
                "id": ",".join(pmids),
                "retmode": "xml",
                "rettype": "abstract",
                "api_key": self.api_key,
            },
        )
        return parse_efetch_xml(record.text)

    def search(self, query: str, limit: int = 15) -> list[PubMedArticle]:
        """
        Up to `limit` relevance-ranked articles, deduplicated by PMID.

        Raises:
            ValueError (limit outside 10..20), ZeroResults, MalformedResponse, NetworkError
        """
        if not MIN_LIMIT <= limit <= MAX_LIMIT:
            raise ValueError(f"PubMed limit must be within {MIN_LIMIT}..{MAX_LIMIT}, got {limit}")
        if not query.strip():
            raise ValueError("PubMed query must be nonempty")

        pmids = list(dict.fromkeys(self.esearch(query, limit)))
        if not pmids:
            raise ZeroResults(query)

        seen: set[str] = set()
        articles = []
        for article in self.efetch(pmids):
            if article.pmid in seen:
                continue
            seen.add(article.pmid)
            articles.append(article)
        # efetch order is not guaranteed; keep esearch relevance order
        rank = {pmid: i for i, pmid in enumerate(pmids)}
        articles.sort(key=lambda a: rank.get(a.pmid, len(rank)))
        logger.info(f"[HTTP] PubMed '{query}': {len(articles)} articles")
        return articles[:limit]
