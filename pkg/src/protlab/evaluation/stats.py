"""
Score statistics: per-metric aggregates, score histograms, best-of-N
selection and within-one-point agreement between two score sets.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from .models import (
    EmptyInput,
    EvalScore,
    Metric,
    MetricStats,
    MissingMetric,
    PairMismatch,
    ScoreAggregate,
    SELECTION_METRICS,
)

logger = logging.getLogger(__name__)

SCORE_LEVELS = tuple(range(6))


# =============================================================================
# Aggregation
# =============================================================================


def metric_stats(values: Sequence[int]) -> MetricStats:
    """Mean, median, population std, max and min of one metric's scores."""
    if len(values) == 0:
        raise EmptyInput("No scores to summarize")
    arr = np.sort(np.asarray(values, dtype=float))
    return MetricStats(
        mean=float(arr.mean()),
        median=float(np.median(arr)),
        std=float(arr.std(ddof=0)),
        max=float(arr[-1]),
        min=float(arr[0]),
        n=int(arr.size),
    )


def _by_metric(scores: Iterable[EvalScore]) -> dict[Metric, MetricStats]:
    grouped: dict[Metric, list[int]] = {}
    for s in scores:
        grouped.setdefault(s.metric, []).append(s.score)
    return {metric: metric_stats(grouped[metric]) for metric in Metric if metric in grouped}


def score_histogram(values: Sequence[int]) -> list[int]:
    """Counts of each score 0..5."""
    return np.bincount(np.asarray(values, dtype=int), minlength=len(SCORE_LEVELS)).tolist()


def aggregate(scores: Sequence[EvalScore]) -> ScoreAggregate:
    """
    Per-metric statistics overall and per dataset, plus score histograms.

    Raises:
        EmptyInput
    """
    scores = list(scores)
    if not scores:
        raise EmptyInput("No scores to aggregate")
    per_dataset = {}
    for dataset in sorted({s.dataset for s in scores if s.dataset}):
        per_dataset[dataset] = _by_metric(s for s in scores if s.dataset == dataset)
    histograms = {
        metric: score_histogram([s.score for s in scores if s.metric is metric])
        for metric in Metric
        if any(s.metric is metric for s in scores)
    }
    return ScoreAggregate(overall=_by_metric(scores), per_dataset=per_dataset, histograms=histograms)


def histogram_frame(agg: ScoreAggregate) -> pd.DataFrame:
    rows = [
        {"metric": metric.value, **{str(level): count for level, count in zip(SCORE_LEVELS, counts)}}
        for metric, counts in agg.histograms.items()
    ]
    return pd.DataFrame(rows, columns=["metric", *[str(level) for level in SCORE_LEVELS]])


# =============================================================================
# Best-of-N
# =============================================================================


@dataclass
class BestOfNResult:
    selected: list[str]
    selected_averages: list[float]
    # curve[n - 1] = mean selected average using the first n runs
    curve: list[float] = field(default_factory=list)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"n_runs": range(1, len(self.curve) + 1), "mean_selected_score": self.curve})


def selection_averages(scores: Iterable[EvalScore]) -> dict[str, float]:
    """Mean of the selection metrics per hypothesis (repeated scores are averaged first)."""
    values: dict[tuple[str, Metric], list[int]] = {}
    for s in scores:
        if s.metric in SELECTION_METRICS:
            values.setdefault((s.hypothesis_id, s.metric), []).append(s.score)
    averages: dict[str, float] = {}
    for hid in sorted({hid for hid, _ in values}):
        per_metric = []
        for metric in SELECTION_METRICS:
            if (hid, metric) not in values:
                raise MissingMetric(hid, metric.value)
            per_metric.append(float(np.mean(values[(hid, metric)])))
        averages[hid] = float(np.mean(per_metric))
    return averages


def best_of_n(runs: Sequence[Sequence[str]], scores: Iterable[EvalScore]) -> BestOfNResult:
    """
    Per hypothesis slot, pick the hypothesis with the highest selection-metric
    average across runs; ties go to the earlier run.

    Slots are positions present in every run. The curve's n-th point uses only
    the first n runs, so it never decreases.

    Args:
        runs: Hypothesis ids per run, in slot order.
        scores: Scores covering every hypothesis in runs.

    Raises:
        ValueError (no runs), MissingMetric
    """
    if not runs:
        raise ValueError("best_of_n needs at least one run")
    averages = selection_averages(scores)
    for run in runs:
        for hid in run:
            if hid not in averages:
                raise MissingMetric(hid, SELECTION_METRICS[0].value)

    n_slots = min(len(run) for run in runs)
    selected = [runs[0][slot] for slot in range(n_slots)]
    curve = []
    for n, run in enumerate(runs, start=1):
        for slot in range(n_slots):
            if averages[run[slot]] > averages[selected[slot]]:
                selected[slot] = run[slot]
        curve.append(float(np.mean([averages[h] for h in selected])) if selected else 0.0)
        logger.debug(f"[Eval] Best-of-{n}: mean selected score {curve[-1]:.3f}")
    return BestOfNResult(selected=selected, selected_averages=[averages[h] for h in selected], curve=curve)


# =============================================================================
# Agreement
# =============================================================================


@dataclass
class AgreementResult:
    within_1: dict[Metric, float]
    mean_abs_diff: dict[Metric, float]
    overall_within_1: float
    overall_mean_abs_diff: float
    n_pairs: int

    def to_frame(self) -> pd.DataFrame:
        rows = [
            {"metric": m.value, "within_1": self.within_1[m], "mean_abs_diff": self.mean_abs_diff[m]}
            for m in Metric
            if m in self.within_1
        ]
        rows.append(
            {"metric": "overall", "within_1": self.overall_within_1, "mean_abs_diff": self.overall_mean_abs_diff}
        )
        return pd.DataFrame(rows, columns=["metric", "within_1", "mean_abs_diff"])


def _keyed(scores: Iterable[EvalScore], label: str) -> dict[tuple[str, Metric], int]:
    keyed: dict[tuple[str, Metric], int] = {}
    for s in scores:
        key = (s.hypothesis_id, s.metric)
        if key in keyed:
            raise PairMismatch(f"Score set {label} has two scores for {s.hypothesis_id} {s.metric.value}")
        keyed[key] = s.score
    return keyed


def agreement_within_1(scores_a: Iterable[EvalScore], scores_b: Iterable[EvalScore]) -> AgreementResult:
    """
    Fraction of (hypothesis, metric) pairs whose scores differ by at most 1.

    Raises:
        PairMismatch (pairs differ, duplicates, or nothing to compare)
    """
    a, b = _keyed(scores_a, "A"), _keyed(scores_b, "B")
    if set(a) != set(b):
        only = sorted(f"{h}/{m.value}" for h, m in set(a) ^ set(b))
        raise PairMismatch(f"Score sets are not paired: {only[:5]}")
    if not a:
        raise PairMismatch("No score pairs to compare")

    diffs: dict[Metric, list[int]] = {}
    for key in a:
        diffs.setdefault(key[1], []).append(abs(a[key] - b[key]))
    everything = np.asarray([d for values in diffs.values() for d in values])
    return AgreementResult(
        within_1={m: float(np.mean(np.asarray(v) <= 1)) for m, v in diffs.items()},
        mean_abs_diff={m: float(np.mean(v)) for m, v in diffs.items()},
        overall_within_1=float(np.mean(everything <= 1)),
        overall_mean_abs_diff=float(everything.mean()),
        n_pairs=int(everything.size),
    )
