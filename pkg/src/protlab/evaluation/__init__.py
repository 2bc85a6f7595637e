"""Automatic hypothesis evaluation: five LLM-judged metrics and their statistics."""

from .chunking import PaperChunk, locate_paper_chunk, split_chunks
from .models import (
    EmptyInput,
    EmptyPaper,
    EvalScore,
    EvaluationError,
    EvaluatorConfig,
    Metric,
    MetricStats,
    MissingMetric,
    MissingReference,
    PairMismatch,
    ScoreAggregate,
    SELECTION_METRICS,
)
from .scoring import (
    HypothesisEvaluator,
    MultiEvaluatorResult,
    References,
    generate_query,
    multi_evaluator,
    score_hypothesis,
)
from .stats import AgreementResult, BestOfNResult, aggregate, agreement_within_1, best_of_n

__all__ = [
    "SELECTION_METRICS",
    "AgreementResult",
    "BestOfNResult",
    "EmptyInput",
    "EmptyPaper",
    "EvalScore",
    "EvaluationError",
    "EvaluatorConfig",
    "HypothesisEvaluator",
    "Metric",
    "MetricStats",
    "MissingMetric",
    "MissingReference",
    "MultiEvaluatorResult",
    "PaperChunk",
    "PairMismatch",
    "References",
    "ScoreAggregate",
    "aggregate",
    "agreement_within_1",
    "best_of_n",
    "generate_query",
    "locate_paper_chunk",
    "multi_evaluator",
    "score_hypothesis",
    "split_chunks",
]
