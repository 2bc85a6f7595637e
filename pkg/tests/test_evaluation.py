"""Tests for paper chunking, hypothesis scoring, score statistics and evaluation reports."""

import math
from pathlib import Path

import httpx
import numpy as np
import pytest

from conftest import DATA_DIR, ScriptedTransport
from protlab.evaluation import (
    EmptyInput,
    EmptyPaper,
    EvalScore,
    EvaluatorConfig,
    HypothesisEvaluator,
    Metric,
    MissingMetric,
    MissingReference,
    PairMismatch,
    SELECTION_METRICS,
    aggregate,
    agreement_within_1,
    best_of_n,
    locate_paper_chunk,
    multi_evaluator,
    split_chunks,
)
from protlab.evaluation.models import EvaluationError
from protlab.evaluation.report import load_scores, render_comparison, render_summary, save_scores
from protlab.evaluation.stats import selection_averages
from protlab.llm.client import ChatClient, ModelParams
from protlab.orchestrator.models import Hypothesis, StatClaim
from protlab.services.http_cache import RecordedHttpClient
from protlab.services.pubmed_client import PubMedClient

EUTILS_URL = "https://eutils.test/entrez/eutils"

EVAL_REPLY = "Analysis: The conclusion follows from the statistics.\nScore (0-5): 4"
EVAL_SCRIPT = {template: EVAL_REPLY for template in (m.template_id for m in Metric)}


def make_hypothesis(entity: str = "CD45RO") -> Hypothesis:
    claim = StatClaim(entity, "Disease vs Healthy", "Welch t-test", logFC=1.02, p_adj=0.00012,
                      raw_values={"logFC": "1.02", "p_adj": "1.2e-4"})
    return Hypothesis(f"{entity} is higher in disease T cells.", (claim,), f"Disease drives {entity} up in T cells.")


def make_scores(values: dict, metric: Metric = Metric.EVALUABILITY, dataset: str = "") -> list[EvalScore]:
    return [EvalScore(hid, metric, "", score, "judge", dataset) for hid, score in values.items()]


def selection_scores(hid: str, score: int) -> list[EvalScore]:
    return [EvalScore(hid, metric, "", score, "judge") for metric in SELECTION_METRICS]


def _pubmed_handler(request: httpx.Request) -> httpx.Response:
    if request.url.path.endswith("/esearch.fcgi"):
        if request.url.params["term"] == "nothing matches":
            return httpx.Response(200, json={"esearchresult": {"idlist": []}})
        return httpx.Response(200, text=(DATA_DIR / "pubmed_esearch.json").read_text(encoding="utf-8"))
    return httpx.Response(200, text=(DATA_DIR / "pubmed_efetch.xml").read_text(encoding="utf-8"))


@pytest.fixture
def pubmed(tmp_path: Path) -> PubMedClient:
    http = RecordedHttpClient(tmp_path / "http", transport=httpx.MockTransport(_pubmed_handler))
    return PubMedClient(http, EUTILS_URL, api_key="")


def scripted_evaluator(script: dict, pubmed=None) -> tuple[HypothesisEvaluator, ScriptedTransport]:
    transport = ScriptedTransport(script)
    client = ChatClient(transport, ModelParams(model="judge-model"))
    return HypothesisEvaluator(client, pubmed, tag="judge"), transport


# =============================================================================
# Paper chunks
# =============================================================================


def test_split_chunks_overlap() -> None:
    words = [f"w{i}" for i in range(2500)]
    chunks = split_chunks(" ".join(words))
    assert len(chunks) == 3
    assert chunks[1].split()[0] == "w800"
    assert chunks[2].split()[-1] == "w2499"
    assert split_chunks("short text") == ["short text"]


def test_split_chunks_rejects_bad_overlap() -> None:
    with pytest.raises(ValueError):
        split_chunks("a b c", chunk_words=10, overlap=10)
    with pytest.raises(EmptyPaper):
        split_chunks("  \n ")


def test_locate_planted_chunk() -> None:
    words = ["lorem"] * 3000
    words[2000] = "CD45RO"
    chunk = locate_paper_chunk(" ".join(words), "CD45RO is elevated in memory T cells")
    assert chunk.index == 2
    assert "CD45RO" in chunk.text
    assert not chunk.zero_overlap


def test_zero_overlap_falls_back_to_first_chunk() -> None:
    chunk = locate_paper_chunk(" ".join(["lorem"] * 1500), "CD45RO")
    assert chunk.index == 0
    assert chunk.zero_overlap


# =============================================================================
# Scoring
# =============================================================================


def test_text_only_metrics_need_no_network() -> None:
    evaluator, transport = scripted_evaluator(EVAL_SCRIPT)
    metrics = [Metric.LOGICAL_COHERENCE, Metric.EVALUABILITY]
    scores = evaluator.evaluate([("h1", make_hypothesis()), ("h2", make_hypothesis("CD19"))], metrics)
    assert [(s.hypothesis_id, s.metric) for s in scores] == [
        ("h1", Metric.LOGICAL_COHERENCE),
        ("h1", Metric.EVALUABILITY),
        ("h2", Metric.LOGICAL_COHERENCE),
        ("h2", Metric.EVALUABILITY),
    ]
    assert all(s.score == 4 and s.evaluator == "judge" for s in scores)
    assert "pubmed_query" not in {t for t, _ in transport.calls}


def test_literature_is_fetched_once_per_hypothesis(pubmed: PubMedClient) -> None:
    script = dict(EVAL_SCRIPT, pubmed_query="Query: CD45RO T cells disease")
    evaluator, transport = scripted_evaluator(script, pubmed)
    evaluator.evaluate([("h1", make_hypothesis())], [Metric.LIT_ALIGNMENT, Metric.LIT_NOVELTY])
    assert transport.count("pubmed_query") == 1
    prompt = next(p for t, p in transport.calls if t == "eval_literature_alignment")
    assert "PMID: 38000137" in prompt
    assert pubmed.http.network_requests == 2


def test_zero_pubmed_results_give_empty_block(pubmed: PubMedClient) -> None:
    script = dict(EVAL_SCRIPT, pubmed_query="Query: nothing matches")
    evaluator, transport = scripted_evaluator(script, pubmed)
    scores = evaluator.evaluate([("h1", make_hypothesis())], [Metric.LIT_NOVELTY])
    assert scores[0].score == 4
    prompt = next(p for t, p in transport.calls if t == "eval_literature_novelty")
    assert "No articles found." in prompt


def test_paper_alignment_needs_paper() -> None:
    evaluator, _ = scripted_evaluator(EVAL_SCRIPT)
    with pytest.raises(MissingReference):
        evaluator.evaluate([("h1", make_hypothesis())], [Metric.PAPER_ALIGNMENT])


def test_paper_alignment_uses_relevant_chunk() -> None:
    words = ["lorem"] * 3000
    words[2100] = "CD45RO"
    evaluator, transport = scripted_evaluator(EVAL_SCRIPT)
    evaluator.evaluate([("h1", make_hypothesis())], [Metric.PAPER_ALIGNMENT], paper_text=" ".join(words))
    prompt = transport.calls[0][1]
    assert "lorem CD45RO lorem" in prompt


def test_literature_needs_pubmed_client() -> None:
    evaluator, _ = scripted_evaluator(EVAL_SCRIPT)
    with pytest.raises(MissingReference):
        evaluator.evaluate([("h1", make_hypothesis())], [Metric.LIT_ALIGNMENT])


class ModelRoutedTransport:
    """Routes requests to per-model scripted transports."""

    uses_network = False

    def __init__(self, routes: dict):
        self.routes = routes

    def send(self, template_id, messages, params):
        return self.routes[params.model].send(template_id, messages, params)


def test_failing_evaluator_leaves_others_intact() -> None:
    broken = {template: "I refuse to score." for template in EVAL_SCRIPT}
    transport = ModelRoutedTransport({"good-model": ScriptedTransport(EVAL_SCRIPT), "bad-model": ScriptedTransport(broken)})
    client = ChatClient(transport, ModelParams(model="good-model"))
    evaluators = [EvaluatorConfig.parse("good=openai:good-model"), EvaluatorConfig.parse("bad=openai:bad-model")]
    result = multi_evaluator(
        [("h1", make_hypothesis())], evaluators, client, metrics=[Metric.EVALUABILITY], retry_budget=2
    )
    assert list(result.scores) == ["good"]
    assert "RetriesExhausted" in result.failures["bad"]
    assert result.aggregates["good"].overall[Metric.EVALUABILITY].mean == 4.0
    assert "| bad | failed |" in render_comparison(result)


@pytest.mark.parametrize(
    "spec, expected",
    [
        ("gpt-4o", EvaluatorConfig("gpt-4o", "gpt-4o", "openai")),
        ("ollama:llama3.1", EvaluatorConfig("ollama:llama3.1", "llama3.1", "ollama")),
        ("judge=anthropic:claude-x", EvaluatorConfig("judge", "claude-x", "anthropic")),
    ],
)
def test_evaluator_spec_parsing(spec: str, expected: EvaluatorConfig) -> None:
    assert EvaluatorConfig.parse(spec) == expected


def test_evaluator_spec_rejects_empty_model() -> None:
    with pytest.raises(ValueError):
        EvaluatorConfig.parse("judge=openai:")


# =============================================================================
# Statistics
# =============================================================================


def test_aggregate_matches_hand_computation() -> None:
    scores = make_scores({"a": 1, "b": 2, "c": 3, "d": 4}, dataset="pbmc")
    scores += make_scores({"e": 5}, metric=Metric.LIT_NOVELTY, dataset="cohort")
    agg = aggregate(scores)
    stats = agg.overall[Metric.EVALUABILITY]
    assert stats.mean == pytest.approx(2.5, abs=1e-12)
    assert stats.median == pytest.approx(2.5, abs=1e-12)
    assert stats.std == pytest.approx(math.sqrt(1.25), abs=1e-12)
    assert (stats.max, stats.min, stats.n) == (4.0, 1.0, 4)
    assert set(agg.per_dataset) == {"cohort", "pbmc"}
    assert Metric.EVALUABILITY not in agg.per_dataset["cohort"]
    assert agg.histograms[Metric.EVALUABILITY] == [0, 1, 1, 1, 1, 0]
    assert "| Evaluability | 2.50 | 2.50 | 1.12 | 4.00 | 1.00 |" in render_summary(agg)


def test_aggregate_empty() -> None:
    with pytest.raises(EmptyInput):
        aggregate([])


def test_score_range_is_enforced() -> None:
    with pytest.raises(ValueError):
        EvalScore("h", Metric.EVALUABILITY, "", 6, "judge")
    with pytest.raises(ValueError):
        EvalScore("h", Metric.EVALUABILITY, "", True, "judge")


def test_best_of_n_picks_higher_average() -> None:
    scores = selection_scores("r1-h1", 2) + selection_scores("r1-h2", 5)
    scores += selection_scores("r2-h1", 4) + selection_scores("r2-h2", 5)
    result = best_of_n([["r1-h1", "r1-h2"], ["r2-h1", "r2-h2"]], scores)
    # ties keep the earlier run
    assert result.selected == ["r2-h1", "r1-h2"]
    assert result.curve == [3.5, 4.5]


def test_best_of_n_curve_never_decreases() -> None:
    rng = np.random.default_rng(5)
    for _ in range(100):
        n_runs, n_slots = int(rng.integers(1, 6)), int(rng.integers(1, 5))
        runs = [[f"r{r}-h{s}" for s in range(n_slots)] for r in range(n_runs)]
        scores = [
            EvalScore(hid, metric, "", int(rng.integers(0, 6)), "judge")
            for run in runs
            for hid in run
            for metric in SELECTION_METRICS
        ]
        curve = best_of_n(runs, scores).curve
        assert all(later >= earlier for earlier, later in zip(curve, curve[1:]))


def test_best_of_n_needs_every_selection_metric() -> None:
    scores = selection_scores("h1", 3)[:-1]
    with pytest.raises(MissingMetric):
        selection_averages(scores)


def test_agreement_hand_counts() -> None:
    a = make_scores({"h1": 3, "h2": 3, "h3": 3, "h4": 3})
    b = make_scores({"h1": 3, "h2": 4, "h3": 5, "h4": 0})
    result = agreement_within_1(a, b)
    assert result.within_1[Metric.EVALUABILITY] == 0.5
    assert result.mean_abs_diff[Metric.EVALUABILITY] == 1.5
    assert result.n_pairs == 4


def test_agreement_requires_pairs() -> None:
    with pytest.raises(PairMismatch):
        agreement_within_1(make_scores({"h1": 3}), make_scores({"h2": 3}))
    with pytest.raises(PairMismatch):
        agreement_within_1(make_scores({"h1": 3}) * 2, make_scores({"h1": 3}))


# =============================================================================
# Score files
# =============================================================================


def test_scores_survive_csv(tmp_path: Path) -> None:
    scores = make_scores({"007": 3, "h2": 0}, dataset="pbmc")
    loaded = load_scores(save_scores(scores, tmp_path / "scores.csv"))
    assert loaded == scores


def test_score_file_needs_columns(tmp_path: Path) -> None:
    path = tmp_path / "scores.csv"
    path.write_text("id,value\nh1,3\n", encoding="utf-8")
    with pytest.raises(EvaluationError):
        load_scores(path)
