"""Scores, aggregates and evaluator settings for the hypothesis-scoring harness."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Optional

from ..core.errors import ProtlabError


# =============================================================================
# Exceptions
# =============================================================================


class EvaluationError(ProtlabError):
    """Base exception for evaluation errors."""

    pass


class EmptyPaper(EvaluationError):
    """Raised when the reference paper text has no words."""

    pass


class MissingReference(EvaluationError):
    """Raised when a metric is scored without the reference it needs."""

    def __init__(self, metric: str, reference: str):
        self.metric = metric
        self.reference = reference
        super().__init__(f"Metric {metric} needs a {reference}")


class EmptyInput(EvaluationError):
    """Raised when there are no scores to aggregate."""

    pass


class MissingMetric(EvaluationError):
    """Raised when best-of-N selection finds a hypothesis without all selection metrics."""

    def __init__(self, hypothesis_id: str, metric: str):
        self.hypothesis_id = hypothesis_id
        self.metric = metric
        super().__init__(f"Hypothesis {hypothesis_id!r} has no {metric} score")


class PairMismatch(EvaluationError):
    """Raised when two score sets do not cover the same (hypothesis, metric) pairs."""

    pass


# =============================================================================
# Metrics
# =============================================================================


class Metric(str, Enum):
    PAPER_ALIGNMENT = "PaperAlignment"
    LIT_ALIGNMENT = "LitAlignment"
    LIT_NOVELTY = "LitNovelty"
    LOGICAL_COHERENCE = "LogicalCoherence"
    EVALUABILITY = "Evaluability"

    @property
    def template_id(self) -> str:
        return METRIC_TEMPLATES[self]

    @property
    def reference(self) -> Optional[str]:
        """"paper", "literature" or None for metrics judged on the text alone."""
        if self is Metric.PAPER_ALIGNMENT:
            return "paper"
        if self in (Metric.LIT_ALIGNMENT, Metric.LIT_NOVELTY):
            return "literature"
        return None

    @classmethod
    def parse(cls, name: str) -> Metric:
        for metric in cls:
            if name.strip().lower() in (metric.value.lower(), metric.name.lower()):
                return metric
        raise ValueError(f"Unknown metric: {name!r}")


METRIC_TEMPLATES = {
    Metric.PAPER_ALIGNMENT: "eval_paper_alignment",
    Metric.LIT_ALIGNMENT: "eval_literature_alignment",
    Metric.LIT_NOVELTY: "eval_literature_novelty",
    Metric.LOGICAL_COHERENCE: "eval_logical_coherence",
    Metric.EVALUABILITY: "eval_evaluability",
}

# best-of-N ranks hypotheses without the reference paper
SELECTION_METRICS = (
    Metric.LIT_ALIGNMENT,
    Metric.LIT_NOVELTY,
    Metric.LOGICAL_COHERENCE,
    Metric.EVALUABILITY,
)


# =============================================================================
# Data Classes
# =============================================================================


@dataclass(frozen=True)
class EvalScore:
    hypothesis_id: str
    metric: Metric
    analysis: str
    score: int
    evaluator: str
    dataset: str = ""

    def __post_init__(self) -> None:
        if not isinstance(self.metric, Metric):
            object.__setattr__(self, "metric", Metric.parse(str(self.metric)))
        if isinstance(self.score, bool) or not isinstance(self.score, int) or not 0 <= self.score <= 5:
            raise ValueError(f"Score must be an integer in 0..5, got {self.score!r}")

    def to_row(self) -> dict:
        return {
            "hypothesis_id": self.hypothesis_id,
            "dataset": self.dataset,
            "metric": self.metric.value,
            "evaluator": self.evaluator,
            "score": self.score,
            "analysis": self.analysis,
        }

    @classmethod
    def from_row(cls, row: dict) -> EvalScore:
        return cls(
            hypothesis_id=str(row["hypothesis_id"]),
            metric=Metric.parse(str(row["metric"])),
            analysis=str(row.get("analysis") or ""),
            score=int(row["score"]),
            evaluator=str(row.get("evaluator") or ""),
            dataset=str(row.get("dataset") or ""),
        )


@dataclass(frozen=True)
class MetricStats:
    mean: float
    median: float
    std: float
    max: float
    min: float
    n: int

    def __post_init__(self) -> None:
        if not self.min <= self.median <= self.max or self.std < 0:
            raise ValueError(f"Inconsistent metric statistics: {self}")


@dataclass
class ScoreAggregate:
    """Per-metric statistics overall and per dataset."""

    overall: dict[Metric, MetricStats]
    per_dataset: dict[str, dict[Metric, MetricStats]] = field(default_factory=dict)
    histograms: dict[Metric, list[int]] = field(default_factory=dict)

    def to_rows(self) -> list[dict]:
        rows = []
        scopes = [("overall", self.overall)] + sorted(self.per_dataset.items())
        for scope, stats in scopes:
            for metric in Metric:
                if metric in stats:
                    rows.append({"scope": scope, "metric": metric.value, **asdict(stats[metric])})
        return rows


@dataclass(frozen=True)
class EvaluatorConfig:
    """One scoring model: a tag plus provider/model settings."""

    tag: str
    model: str
    provider: str = "openai"
    base_url: str = ""

    @classmethod
    def parse(cls, spec: str, default_provider: str = "openai") -> EvaluatorConfig:
        """
        Parse "provider:model" or "model", optionally prefixed with "tag=".

        Examples:
            "gpt-4o"                  -> tag gpt-4o, default provider
            "ollama:llama3.1"         -> tag ollama:llama3.1
            "judge=anthropic:claude"  -> tag judge
        """
        tag, sep, rest = spec.partition("=")
        if not sep:
            tag, rest = spec, spec
        provider, sep, model = rest.partition(":")
        if not sep:
            provider, model = default_provider, rest
        if not model.strip() or not tag.strip():
            raise ValueError(f"Invalid evaluator spec: {spec!r}")
        return cls(tag=tag.strip(), model=model.strip(), provider=provider.strip())
