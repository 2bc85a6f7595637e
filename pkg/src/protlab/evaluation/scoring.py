"""
Hypothesis scoring with the five evaluation prompts.

References per metric:
- PaperAlignment: the most relevant chunk of the reference paper
- LitAlignment, LitNovelty: PubMed articles found with an LLM-written query
- LogicalCoherence, Evaluability: none (no network activity)
"""

from __future__ import annotations

import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

from ..core.errors import ProtlabError
from ..llm.client import ChatClient
from ..llm.parsing import parse_evaluation, parse_query
from ..orchestrator.models import Hypothesis
from ..services.errors import ZeroResults
from ..services.pubmed_client import PubMedClient, format_articles
from .chunking import locate_paper_chunk
from .models import EvalScore, EvaluatorConfig, Metric, MissingReference, ScoreAggregate
from .stats import aggregate

logger = logging.getLogger(__name__)

MAX_QUERY_TERMS = 10


@dataclass(frozen=True)
class References:
    paper_chunk: Optional[str] = None
    articles: Optional[str] = None


def generate_query(hypothesis: Hypothesis, llm: ChatClient, retry_budget: int = 3) -> str:
    """A PubMed query of at most 10 terms built from the hypothesis' entities."""
    return llm.complete_with_retry(
        "pubmed_query",
        {"hypothesis": hypothesis.full_text()},
        lambda raw: parse_query(raw, max_terms=MAX_QUERY_TERMS),
        budget=retry_budget,
    )


def score_hypothesis(
    hypothesis: Hypothesis,
    metric: Metric,
    references: References,
    llm: ChatClient,
    hypothesis_id: str = "",
    evaluator: str = "",
    dataset: str = "",
    retry_budget: int = 3,
) -> EvalScore:
    """
    Score one hypothesis on one metric.

    Raises:
        MissingReference, RetriesExhausted
    """
    bindings = {"conclusion": hypothesis.full_text()}
    if metric.reference == "paper":
        if not references.paper_chunk:
            raise MissingReference(metric.value, "reference paper chunk")
        bindings["paper_chunk"] = references.paper_chunk
    elif metric.reference == "literature":
        if references.articles is None:
            raise MissingReference(metric.value, "literature reference block")
        bindings["articles"] = references.articles

    analysis, score = llm.complete_with_retry(metric.template_id, bindings, parse_evaluation, budget=retry_budget)
    logger.debug(f"[Eval] {hypothesis_id or 'hypothesis'} {metric.value}: {score}")
    return EvalScore(
        hypothesis_id=hypothesis_id,
        metric=metric,
        analysis=analysis,
        score=score,
        evaluator=evaluator or llm.params.model,
        dataset=dataset,
    )


class HypothesisEvaluator:
    """
    Scores hypothesis sets with one evaluator model.

    Literature references are fetched once per hypothesis and shared by both
    literature metrics; scoring of distinct (hypothesis, metric) pairs runs on
    a thread pool bounded by the client's in-flight limit.
    """

    def __init__(
        self,
        llm: ChatClient,
        pubmed: Optional[PubMedClient] = None,
        tag: str = "",
        pubmed_limit: int = 15,
        retry_budget: int = 3,
        chunk_words: int = 1000,
        chunk_overlap: int = 200,
    ):
        self.llm = llm
        self.pubmed = pubmed
        self.tag = tag or llm.params.model
        self.pubmed_limit = pubmed_limit
        self.retry_budget = retry_budget
        self.chunk_words = chunk_words
        self.chunk_overlap = chunk_overlap
        self._literature: dict[str, str] = {}
        self._lock = threading.Lock()

    def literature(self, hypothesis: Hypothesis) -> str:
        """Formatted PubMed articles for the hypothesis; empty block on zero results."""
        key = hypothesis.full_text()
        with self._lock:
            if key in self._literature:
                return self._literature[key]
        if self.pubmed is None:
            raise MissingReference("literature metrics", "PubMed client")
        query = generate_query(hypothesis, self.llm, self.retry_budget)
        try:
            articles = self.pubmed.search(query, limit=self.pubmed_limit)
        except ZeroResults:
            logger.warning(f"[Eval] PubMed returned nothing for '{query}'; scoring with an empty reference block")
            articles = []
        block = format_articles(articles)
        with self._lock:
            self._literature[key] = block
        return block

    def references(self, hypothesis: Hypothesis, metrics: Sequence[Metric], paper_text: Optional[str]) -> References:
        paper_chunk = None
        articles = None
        if Metric.PAPER_ALIGNMENT in metrics and paper_text is not None:
            paper_chunk = locate_paper_chunk(
                paper_text, hypothesis.full_text(), self.chunk_words, self.chunk_overlap
            ).text
        if any(m.reference == "literature" for m in metrics):
            articles = self.literature(hypothesis)
        return References(paper_chunk=paper_chunk, articles=articles)

    def evaluate(
        self,
        items: Sequence[tuple[str, Hypothesis]],
        metrics: Sequence[Metric] = tuple(Metric),
        paper_text: Optional[str] = None,
        dataset: str = "",
    ) -> list[EvalScore]:
        """
        Score every (hypothesis, metric) pair; results follow input order.

        Raises:
            MissingReference, RetriesExhausted, NetworkError
        """
        metrics = list(metrics)
        if Metric.PAPER_ALIGNMENT in metrics and paper_text is None:
            raise MissingReference(Metric.PAPER_ALIGNMENT.value, "reference paper")

        refs = [self.references(h, metrics, paper_text) for _, h in items]
        tasks = [(hid, h, ref, m) for (hid, h), ref in zip(items, refs) for m in metrics]
        logger.info(f"[Eval] {self.tag}: scoring {len(items)} hypotheses on {len(metrics)} metrics")

        def run(task) -> EvalScore:
            hid, h, ref, metric = task
            return score_hypothesis(
                h, metric, ref, self.llm,
                hypothesis_id=hid, evaluator=self.tag, dataset=dataset, retry_budget=self.retry_budget,
            )

        with ThreadPoolExecutor(max_workers=self.llm.max_in_flight) as pool:
            return list(pool.map(run, tasks))


@dataclass
class MultiEvaluatorResult:
    scores: dict[str, list[EvalScore]] = field(default_factory=dict)
    aggregates: dict[str, ScoreAggregate] = field(default_factory=dict)
    failures: dict[str, str] = field(default_factory=dict)

    def all_scores(self) -> list[EvalScore]:
        return [s for tag in sorted(self.scores) for s in self.scores[tag]]


def evaluator_client(base: ChatClient, config: EvaluatorConfig) -> ChatClient:
    """A client for the evaluator's model sharing the base client's transport."""
    return base.with_params(
        replace(base.params, model=config.model, provider=config.provider, base_url=config.base_url)
    )


def multi_evaluator(
    items: Sequence[tuple[str, Hypothesis]],
    evaluators: Sequence[EvaluatorConfig],
    llm: ChatClient,
    pubmed: Optional[PubMedClient] = None,
    metrics: Sequence[Metric] = tuple(Metric),
    paper_text: Optional[str] = None,
    dataset: str = "",
    pubmed_limit: int = 15,
    retry_budget: int = 3,
) -> MultiEvaluatorResult:
    """
    Score with each evaluator; one evaluator failing leaves the others intact.

    Raises:
        ValueError (no evaluators)
    """
    if not evaluators:
        raise ValueError("multi_evaluator needs at least one evaluator")
    result = MultiEvaluatorResult()
    for config in evaluators:
        evaluator = HypothesisEvaluator(
            evaluator_client(llm, config), pubmed, tag=config.tag,
            pubmed_limit=pubmed_limit, retry_budget=retry_budget,
        )
        try:
            scores = evaluator.evaluate(items, metrics, paper_text=paper_text, dataset=dataset)
            summary = aggregate(scores)
        except ProtlabError as e:
            logger.error(f"[Eval] Evaluator {config.tag} failed: {e}")
            result.failures[config.tag] = f"{type(e).__name__}: {e}"
            continue
        result.scores[config.tag] = scores
        result.aggregates[config.tag] = summary
    return result
