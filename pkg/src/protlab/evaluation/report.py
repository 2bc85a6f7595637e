"""CSV and Markdown exports for evaluation scores and their statistics."""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Sequence

import pandas as pd

from .models import EmptyInput, EvalScore, EvaluationError, Metric, ScoreAggregate
from .scoring import MultiEvaluatorResult
from .stats import histogram_frame

logger = logging.getLogger(__name__)

SCORE_COLUMNS = ["hypothesis_id", "dataset", "metric", "evaluator", "score", "analysis"]
STAT_COLUMNS = ["mean", "median", "std", "max", "min"]


def scores_frame(scores: Sequence[EvalScore]) -> pd.DataFrame:
    return pd.DataFrame([s.to_row() for s in scores], columns=SCORE_COLUMNS)


def save_scores(scores: Sequence[EvalScore], path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    scores_frame(scores).to_csv(path, index=False, encoding="utf-8-sig")
    return path


def load_scores(path: Path) -> list[EvalScore]:
    """
    Scores from a CSV written by save_scores.

    Raises:
        EmptyInput (no rows), OSError
    """
    frame = pd.read_csv(path, dtype={"hypothesis_id": str}, keep_default_na=False, encoding="utf-8-sig")
    missing = {"hypothesis_id", "metric", "score"} - set(frame.columns)
    if missing:
        raise EvaluationError(f"Score file {path} lacks columns {sorted(missing)}")
    if frame.empty:
        raise EmptyInput(f"Score file {path} has no rows")
    return [EvalScore.from_row(row) for row in frame.to_dict(orient="records")]


def aggregate_frame(agg: ScoreAggregate) -> pd.DataFrame:
    return pd.DataFrame(agg.to_rows(), columns=["scope", "metric", *STAT_COLUMNS, "n"])


def _markdown_table(header: list[str], rows: list[list[str]]) -> str:
    lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    lines += ["| " + " | ".join(row) + " |" for row in rows]
    return "\n".join(lines)


def render_summary(agg: ScoreAggregate, title: str = "Evaluation summary") -> str:
    """Metric x (mean, median, std, max, min), overall then per dataset."""
    parts = [f"# {title}", ""]
    scopes = [("Overall", agg.overall)] + [(f"Dataset {name}", stats) for name, stats in sorted(agg.per_dataset.items())]
    for scope, stats in scopes:
        rows = [
            [metric.value] + [f"{getattr(stats[metric], c):.2f}" for c in STAT_COLUMNS]
            for metric in Metric
            if metric in stats
        ]
        parts += [f"## {scope}", "", _markdown_table(["Metric", "Mean", "Median", "Std", "Max", "Min"], rows), ""]
    return "\n".join(parts)


def comparison_frame(result: MultiEvaluatorResult) -> pd.DataFrame:
    """Per-metric mean score of each evaluator; failed evaluators are listed with a status."""
    rows = []
    for tag in sorted(set(result.aggregates) | set(result.failures)):
        row = {"evaluator": tag, "status": "ok" if tag in result.aggregates else "failed"}
        agg = result.aggregates.get(tag)
        for metric in Metric:
            row[metric.value] = agg.overall[metric].mean if agg and metric in agg.overall else None
        rows.append(row)
    return pd.DataFrame(rows, columns=["evaluator", "status", *[m.value for m in Metric]])


def render_comparison(result: MultiEvaluatorResult) -> str:
    frame = comparison_frame(result)
    rows = [
        [r["evaluator"], r["status"]] + ["" if pd.isna(r[m.value]) else f"{r[m.value]:.2f}" for m in Metric]
        for r in frame.to_dict(orient="records")
    ]
    parts = ["# Evaluator comparison", "", _markdown_table(["Evaluator", "Status", *[m.value for m in Metric]], rows), ""]
    for tag, error in sorted(result.failures.items()):
        parts.append(f"- {tag}: {error}")
    return "\n".join(parts) + "\n"


def write_evaluation_reports(scores: Sequence[EvalScore], agg: ScoreAggregate, out_dir: Path, stem: str = "evaluation") -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = [save_scores(scores, out_dir / f"{stem}_scores.csv")]

    summary_csv = out_dir / f"{stem}_summary.csv"
    aggregate_frame(agg).to_csv(summary_csv, index=False, encoding="utf-8-sig")
    hist_csv = out_dir / f"{stem}_histograms.csv"
    histogram_frame(agg).to_csv(hist_csv, index=False, encoding="utf-8-sig")
    md = out_dir / f"{stem}.md"
    md.write_text(render_summary(agg), encoding="utf-8")
    paths += [summary_csv, hist_csv, md]
    logger.info(f"[Eval] Reports written to {out_dir}")
    return paths


def write_comparison_reports(result: MultiEvaluatorResult, out_dir: Path, stem: str = "evaluators") -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"{stem}.csv"
    comparison_frame(result).to_csv(csv_path, index=False, encoding="utf-8-sig")
    md_path = out_dir / f"{stem}.md"
    md_path.write_text(render_comparison(result), encoding="utf-8")
    return [csv_path, md_path]
