"""Tests for the recorded HTTP client, THPA and PubMed lookups and the provider registry."""

import json
from pathlib import Path

import httpx
import pytest

from conftest import DATA_DIR
from protlab.core.errors import ConfigError, NetworkError
from protlab.services.errors import MalformedResponse, ProteinNotFound, ZeroResults
from protlab.services.http_cache import RecordedHttpClient, canonical_url, recording_key
from protlab.services.llm_providers import get_provider, resolve_api_key, resolve_base_url
from protlab.services.pubmed_client import PubMedArticle, PubMedClient, format_articles, parse_efetch_xml
from protlab.services.thpa_client import ThpaClient

THPA_URL = "https://thpa.test"
EUTILS_URL = "https://eutils.test/entrez/eutils"
MKI67_ENSEMBL = "ENSG00000148773"


def _fake_services(request: httpx.Request) -> httpx.Response:
    path = request.url.path
    params = request.url.params
    if path == "/api/search_download.php":
        if params["search"] in ("MKI67", "KIA"):
            return httpx.Response(200, text=(DATA_DIR / "thpa_mki67_search.json").read_text(encoding="utf-8"))
        return httpx.Response(200, json=[])
    if path == f"/{MKI67_ENSEMBL}.json":
        return httpx.Response(200, text=(DATA_DIR / "thpa_mki67_entry.json").read_text(encoding="utf-8"))
    if path.endswith("/esearch.fcgi"):
        if params["term"] == "nothing matches":
            return httpx.Response(200, json={"esearchresult": {"count": "0", "idlist": []}})
        return httpx.Response(200, text=(DATA_DIR / "pubmed_esearch.json").read_text(encoding="utf-8"))
    if path.endswith("/efetch.fcgi"):
        return httpx.Response(200, text=(DATA_DIR / "pubmed_efetch.xml").read_text(encoding="utf-8"))
    return httpx.Response(404, text="not found")


@pytest.fixture
def http(tmp_path: Path) -> RecordedHttpClient:
    return RecordedHttpClient(tmp_path / "http", transport=httpx.MockTransport(_fake_services))


# =============================================================================
# Recorded HTTP
# =============================================================================


def test_canonical_url_sorts_and_drops_secrets() -> None:
    url = canonical_url("https://x.test/q", {"b": 2, "a": 1, "api_key": "secret", "skip": None})
    assert url == "https://x.test/q?a=1&b=2"
    assert recording_key("https://x.test/q", {"a": 1, "b": 2}) == recording_key(
        "https://x.test/q", {"b": 2, "a": 1, "api_key": "other"}
    )


def test_recordings_are_served_offline(http: RecordedHttpClient, tmp_path: Path) -> None:
    first = http.get(f"{THPA_URL}/{MKI67_ENSEMBL}.json")
    assert http.network_requests == 1
    assert len(list((tmp_path / "http").glob("*.json"))) == 1

    offline = RecordedHttpClient(tmp_path / "http", offline=True)
    again = offline.get(f"{THPA_URL}/{MKI67_ENSEMBL}.json")
    assert again.text == first.text
    assert offline.network_requests == 0


def test_offline_miss_raises(tmp_path: Path) -> None:
    offline = RecordedHttpClient(tmp_path / "empty", offline=True)
    with pytest.raises(NetworkError):
        offline.get(f"{THPA_URL}/missing.json")


def test_server_error_is_not_recorded(tmp_path: Path) -> None:
    client = RecordedHttpClient(
        tmp_path / "http", transport=httpx.MockTransport(lambda request: httpx.Response(503, text="busy"))
    )
    with pytest.raises(NetworkError):
        client.get(f"{THPA_URL}/anything.json")
    assert list((tmp_path / "http").glob("*.json")) == []


def test_invalid_json_body(tmp_path: Path) -> None:
    client = RecordedHttpClient(
        tmp_path / "http", transport=httpx.MockTransport(lambda request: httpx.Response(200, text="<html>"))
    )
    with pytest.raises(MalformedResponse):
        client.get(f"{THPA_URL}/page").json()


def test_corrupt_recording_is_refetched(http: RecordedHttpClient, tmp_path: Path) -> None:
    url = f"{THPA_URL}/{MKI67_ENSEMBL}.json"
    (tmp_path / "http" / f"{recording_key(url)}.json").write_text("{broken", encoding="utf-8")
    assert http.get(url).status == 200
    assert http.network_requests == 1


# =============================================================================
# The Human Protein Atlas
# =============================================================================


def test_thpa_lookup_fills_every_section(http: RecordedHttpClient) -> None:
    entry = ThpaClient(http, THPA_URL).lookup("MKI67")
    assert entry.ensembl_id == MKI67_ENSEMBL
    assert all(entry.sections().values())
    assert entry.pathways == ("Cell cycle",)
    assert entry.favorable_cancers == ("Endometrial cancer",)
    assert entry.unfavorable_cancers == ("Liver cancer", "Renal cancer")
    assert "Breast cancer" not in entry.to_text()


def test_thpa_resolves_synonyms(http: RecordedHttpClient) -> None:
    assert ThpaClient(http, THPA_URL).resolve("kia") == MKI67_ENSEMBL


def test_thpa_exact_name_beats_prefix_match(http: RecordedHttpClient) -> None:
    # the search also returns MKI67IP, listed first
    assert ThpaClient(http, THPA_URL).resolve("MKI67") == MKI67_ENSEMBL


def test_thpa_unknown_protein(http: RecordedHttpClient) -> None:
    with pytest.raises(ProteinNotFound) as excinfo:
        ThpaClient(http, THPA_URL).lookup("NOTAGENE")
    assert excinfo.value.symbol == "NOTAGENE"


def test_thpa_empty_symbol(http: RecordedHttpClient) -> None:
    with pytest.raises(ValueError):
        ThpaClient(http, THPA_URL).lookup("  ")


# =============================================================================
# PubMed
# =============================================================================


def test_pubmed_search_keeps_relevance_order(http: RecordedHttpClient) -> None:
    articles = PubMedClient(http, EUTILS_URL, api_key="").search("MKI67 survival", limit=15)
    expected = json.loads((DATA_DIR / "pubmed_esearch.json").read_text(encoding="utf-8"))["esearchresult"]["idlist"]
    assert [a.pmid for a in articles] == expected
    assert articles[0].abstract.startswith("BACKGROUND: Proliferation markers")
    assert "High MKI67 was associated" in articles[0].abstract


def test_pubmed_limit_range(http: RecordedHttpClient) -> None:
    client = PubMedClient(http, EUTILS_URL, api_key="")
    for limit in (9, 21):
        with pytest.raises(ValueError):
            client.search("MKI67", limit=limit)
    assert http.network_requests == 0


def test_pubmed_zero_results(http: RecordedHttpClient) -> None:
    with pytest.raises(ZeroResults):
        PubMedClient(http, EUTILS_URL, api_key="").search("nothing matches")


def test_pubmed_api_key_sent_but_not_recorded(tmp_path: Path) -> None:
    seen_keys = []

    def handler(request: httpx.Request) -> httpx.Response:
        seen_keys.append(request.url.params.get("api_key"))
        return _fake_services(request)

    http = RecordedHttpClient(tmp_path / "http", transport=httpx.MockTransport(handler))
    PubMedClient(http, EUTILS_URL, api_key="secret123").search("MKI67 survival")
    assert seen_keys == ["secret123", "secret123"]
    for path in (tmp_path / "http").glob("*.json"):
        assert "secret123" not in path.read_text(encoding="utf-8")


def test_parse_efetch_skips_records_without_title() -> None:
    xml = (
        "<PubmedArticleSet>"
        "<PubmedArticle><MedlineCitation><PMID>1</PMID></MedlineCitation></PubmedArticle>"
        "<PubmedArticle><MedlineCitation><PMID>2</PMID><Article><ArticleTitle>T</ArticleTitle>"
        "</Article></MedlineCitation></PubmedArticle>"
        "</PubmedArticleSet>"
    )
    assert parse_efetch_xml(xml) == [PubMedArticle(pmid="2", title="T")]
    with pytest.raises(MalformedResponse):
        parse_efetch_xml("<unclosed")


def test_format_articles() -> None:
    assert format_articles([]) == "No articles found."
    block = format_articles([PubMedArticle("1", "First"), PubMedArticle("2", "Second", "Text.")])
    assert block == (
        "PMID: 1\nTitle: First\nAbstract: (no abstract available)\n\nPMID: 2\nTitle: Second\nAbstract: Text."
    )


def test_article_rejects_non_numeric_pmid() -> None:
    with pytest.raises(ValueError):
        PubMedArticle(pmid="PMC123", title="x")


# =============================================================================
# LLM providers
# =============================================================================


def test_unknown_provider() -> None:
    with pytest.raises(ConfigError):
        get_provider("skynet")


def test_provider_base_urls() -> None:
    assert resolve_base_url("openai") is None
    assert resolve_base_url("ollama") == "http://localhost:11434"
    assert resolve_base_url("ollama", "http://gpu-box:11434") == "http://gpu-box:11434"


def test_provider_api_key_from_env(monkeypatch: pytest.MonkeyPatch) -> None:
    monkeypatch.setenv("MISTRAL_API_KEY", "k-1")
    assert resolve_api_key("Mistral") == "k-1"
    monkeypatch.delenv("MISTRAL_API_KEY")
    assert resolve_api_key("mistral") is None
    assert resolve_api_key("ollama") is None
