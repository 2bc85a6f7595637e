"""Tests for prompt templates, response parsers and the record/replay chat client."""

from pathlib import Path

import pytest

from conftest import GOLDEN_DIR, ScriptedTransport, scripted_client
from protlab.llm import (
    TEMPLATE_IDS,
    ChatMessage,
    CountMismatch,
    MissingSlot,
    ModelParams,
    OutOfRange,
    ParseFailure,
    RecordingStore,
    RecordingTransport,
    ReplayMiss,
    ReplayTransport,
    RetriesExhausted,
    UnknownTemplate,
    get_template,
    parse_cell_type,
    parse_comma_list,
    parse_evaluation,
    parse_hypotheses,
    parse_json_object,
    parse_labeled_value,
    parse_numbered_list,
    parse_query,
    parse_refined_annotations,
    parse_score,
    render,
    request_hash,
)
from protlab.llm.client import TokenBucket
from protlab.llm.templates import VERBATIM_TEMPLATES

CONCLUSION = "[Insert AI conclusion here]"
ARTICLES = "[Insert relevant PubMed article information here]"

# slot -> placeholder text in the golden files
GOLDEN_BINDINGS = {
    "cell_type_annotation": {"tissue": "<tissue name>", "markers": "<markers>"},
    "annotation_refinement": {
        "cell_type_count": "<cell type number>",
        "annotations": "<original cell type annotations>",
    },
    "eval_paper_alignment": {"conclusion": CONCLUSION, "paper_chunk": "[Insert original conclusion here]"},
    "eval_literature_alignment": {"conclusion": CONCLUSION, "articles": ARTICLES},
    "eval_literature_novelty": {"conclusion": CONCLUSION, "articles": ARTICLES},
    "eval_logical_coherence": {"conclusion": CONCLUSION},
    "eval_evaluability": {"conclusion": CONCLUSION},
}

HYPOTHESES_RESPONSE = """\
## Hypothesis 1
**Summary:** B cells are expanded in disease samples.
**Statistical Test:**
- B Cells | Disease vs Healthy | Differential Abundance | logFC=1.4946, p_adj=0.0
- CD19 | Disease vs Healthy | Differential Expression | logFC=0.12, p=0.4
**Hypothesis:** Disease drives a B cell expansion in blood.

Summary: Memory T cells shift in disease.
Statistical Test:
1. CD45RO in T Cells | Disease vs Healthy | Welch t-test | logFC=1.02, p_adj=1.2e-4
Hypothesis: Disease pushes T cells toward a memory phenotype.
"""


# =============================================================================
# Templates
# =============================================================================


@pytest.mark.parametrize("template_id", VERBATIM_TEMPLATES)
def test_verbatim_templates_match_golden_text(template_id: str) -> None:
    expected = (GOLDEN_DIR / f"{template_id}.txt").read_text(encoding="utf-8")
    assert render(template_id, GOLDEN_BINDINGS[template_id]) == expected


def test_every_template_loads() -> None:
    for template_id in TEMPLATE_IDS:
        template = get_template(template_id)
        assert template.body
        assert template.verbatim == (template_id in VERBATIM_TEMPLATES)


def test_render_does_not_rescan_bound_values() -> None:
    prompt = render("eval_evaluability", {"conclusion": "keep <conclusion> literally"})
    assert "keep <conclusion> literally" in prompt


def test_render_missing_slot() -> None:
    with pytest.raises(MissingSlot) as excinfo:
        render("cell_type_annotation", {"tissue": "Blood"})
    assert excinfo.value.slot == "markers"


def test_unknown_template() -> None:
    with pytest.raises(UnknownTemplate):
        get_template("no_such_template")


# =============================================================================
# Parsers
# =============================================================================


def test_parse_cell_type() -> None:
    answer = parse_cell_type("Analysis: CD3 and CD4 are high. Cell Type: **CD4+ T Cells**")
    assert answer.cell_type == "CD4+ T Cells"
    assert answer.analysis == "CD3 and CD4 are high."


def test_parse_cell_type_last_marker_wins() -> None:
    answer = parse_cell_type("Cell Type: B Cells? No.\nAnalysis: CD14 high.\nCell Type: Monocytes")
    assert answer.cell_type == "Monocytes"


def test_parse_cell_type_without_marker() -> None:
    with pytest.raises(ParseFailure):
        parse_cell_type("These look like T cells.")


def test_parse_refined_annotations() -> None:
    assert parse_refined_annotations("T Cells, T Cells, B Cells", 3) == ["T Cells", "T Cells", "B Cells"]
    with pytest.raises(CountMismatch):
        parse_refined_annotations("T Cells, B Cells", 3)


@pytest.mark.parametrize("score", [0, 1, 2, 3, 4, 5])
def test_parse_score_accepts_range(score: int) -> None:
    assert parse_score(f"Analysis: fine.\nScore (0-5): {score}") == score


def test_parse_score_rejects_invalid() -> None:
    with pytest.raises(OutOfRange):
        parse_score("Score (0-5): 6")
    with pytest.raises(OutOfRange):
        parse_score("Score (0-5): -1")
    with pytest.raises(ParseFailure):
        parse_score("Score (0-5): 3.5")
    with pytest.raises(ParseFailure):
        parse_score("I would give it a four.")


def test_parse_score_tolerates_markdown() -> None:
    assert parse_score("**Score (0-5):** 4") == 4


def test_parse_evaluation() -> None:
    analysis, score = parse_evaluation("Analysis: consistent with the literature.\nScore (0-5): 4")
    assert score == 4
    assert "consistent with the literature" in analysis
    with pytest.raises(ParseFailure):
        parse_evaluation("Score (0-5): 4")


def test_parse_numbered_list() -> None:
    assert parse_numbered_list("1. Clustering\n2) Differential Abundance\n- THPA") == [
        "Clustering",
        "Differential Abundance",
        "THPA",
    ]
    assert parse_numbered_list("NONE", allow_none=True) == []
    with pytest.raises(ParseFailure):
        parse_numbered_list("no list here")


def test_parse_comma_list_filters_unknown() -> None:
    names = parse_comma_list("cd3, CD4, XYZ, CD8, CD19", allowed=["CD3", "CD4", "CD8", "CD19"], max_items=3)
    assert names == ["CD3", "CD4", "CD8"]
    with pytest.raises(ParseFailure):
        parse_comma_list("XYZ", allowed=["CD3"])


def test_parse_labeled_value() -> None:
    assert parse_labeled_value("Reasoning...\nProtein: cd45ro", "Protein", ["CD3", "CD45RO"]) == "CD45RO"
    with pytest.raises(ParseFailure):
        parse_labeled_value("Protein: CD999", "Protein", ["CD3"])


def test_parse_json_object() -> None:
    assert parse_json_object('```json\n{"field": "condition", "k": 4}\n```') == {"field": "condition", "k": 4}
    with pytest.raises(ParseFailure):
        parse_json_object("[1, 2]")


def test_parse_query_clips_terms() -> None:
    assert parse_query('Query: "MKI67 survival lung"') == "MKI67 survival lung"
    assert len(parse_query(" ".join(f"t{i}" for i in range(15))).split()) == 10


def test_parse_hypotheses() -> None:
    hypotheses = parse_hypotheses(HYPOTHESES_RESPONSE)
    assert len(hypotheses) == 2
    first = hypotheses[0]
    assert first.overview == "B cells are expanded in disease samples."
    assert first.statement == "Disease drives a B cell expansion in blood."
    claim = first.stat_summary[0]
    assert (claim.entity, claim.comparison, claim.test) == ("B Cells", "Disease vs Healthy", "Differential Abundance")
    assert claim.logFC == pytest.approx(1.4946)
    assert claim.p_adj == 0.0
    assert first.stat_summary[1].p == pytest.approx(0.4)
    assert hypotheses[1].stat_summary[0].p_adj == pytest.approx(1.2e-4)
    assert hypotheses[1].stat_summary[0].raw_values["p_adj"] == "1.2e-4"


def test_parse_hypotheses_requires_numbers() -> None:
    response = "Summary: s.\nStatistical Test:\n- B cells went up\nHypothesis: h."
    with pytest.raises(ParseFailure):
        parse_hypotheses(response)


# =============================================================================
# Client, record and replay
# =============================================================================


def test_request_hash_normalizes_line_endings_and_paths() -> None:
    params = ModelParams(model="m")
    a = request_hash("t", [ChatMessage("user", "a\r\nb", ("/tmp/x/plot.png",))], params)
    b = request_hash("t", [ChatMessage("user", "a\nb", ("/other/plot.png",))], params)
    assert a == b
    assert a != request_hash("t", [ChatMessage("user", "a\nb")], params)
    assert a != request_hash("t", [ChatMessage("user", "a\nb", ("plot.png",))], ModelParams(model="m", seed=1))


def test_record_then_replay(tmp_path: Path) -> None:
    store_path = tmp_path / "llm.jsonl"
    inner = ScriptedTransport({"pubmed_query": "Query: B cells disease"})
    recorder = RecordingTransport(inner, RecordingStore(store_path))
    params = ModelParams(model="m")
    messages = [ChatMessage("user", "find articles")]

    recorder.send("pubmed_query", messages, params)
    assert len(store_path.read_text(encoding="utf-8").splitlines()) == 1

    replay = ReplayTransport(RecordingStore(store_path))
    assert replay.send("pubmed_query", messages, params).text == "Query: B cells disease"
    assert replay.uses_network is False
    with pytest.raises(ReplayMiss) as excinfo:
        replay.send("pubmed_query", [ChatMessage("user", "something else")], params)
    assert excinfo.value.template_id == "pubmed_query"


def test_recording_store_skips_malformed_lines(tmp_path: Path) -> None:
    path = tmp_path / "llm.jsonl"
    path.write_text("not json\n\n", encoding="utf-8")
    assert len(RecordingStore(path)) == 0


def test_complete_with_retry_reprompts() -> None:
    client, transport = scripted_client({"eval_evaluability": ["I like it.", "Analysis: ok.\nScore (0-5): 3"]})
    score = client.complete_with_retry("eval_evaluability", {"conclusion": "c"}, parse_score, budget=3)
    assert score == 3
    assert transport.count("eval_evaluability") == 2
    assert client.request_count == 2
    assert client.total_tokens == 30


def test_complete_with_retry_exhausts() -> None:
    client, _ = scripted_client({"eval_evaluability": "no score"})
    with pytest.raises(RetriesExhausted) as excinfo:
        client.complete_with_retry("eval_evaluability", {"conclusion": "c"}, parse_score, budget=2)
    assert excinfo.value.attempts == 2
    assert excinfo.value.last_raw == "no score"


def test_step_model_routing() -> None:
    client, _ = scripted_client({}, step_models={"propose_hypotheses": "big-model"})
    assert client.params_for("propose_hypotheses").model == "big-model"
    assert client.params_for("plan_objectives").model == "test-model"


def test_token_bucket_waits_when_empty() -> None:
    now = [0.0]
    slept = []

    def sleep(seconds: float) -> None:
        slept.append(seconds)
        now[0] += seconds

    bucket = TokenBucket(rate=2.0, capacity=1.0, clock=lambda: now[0], sleep=sleep)
    bucket.acquire()
    bucket.acquire()
    assert slept == [pytest.approx(0.5)]
