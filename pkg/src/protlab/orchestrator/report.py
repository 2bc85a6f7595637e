"""
Run reports built from the journal alone.

- Markdown: objectives, executed workflows and three-part hypothesis blocks
- CSV: one row per statistical claim
- JSON: the hypothesis set, the input format of the evaluation harness
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Iterable

import pandas as pd

from .journal import RunJournal
from .models import NUMERIC_CLAIM_FIELDS, Hypothesis, JournalError

logger = logging.getLogger(__name__)

CLAIM_COLUMNS = ("hypothesis_id", "objective_id", "entity", "comparison", "test", *NUMERIC_CLAIM_FIELDS, "traceable")


def hypotheses_from_journal(journal: RunJournal) -> list[Hypothesis]:
    hypotheses = []
    for event in journal.events_of("hypotheses_proposed"):
        hypotheses.extend(Hypothesis.from_dict(h) for h in event["hypotheses"])
    return hypotheses


def _format_value(value) -> str:
    return "" if value is None else f"{value:g}"


def hypothesis_block(index: int, hypothesis: Hypothesis) -> str:
    lines = [f"### Hypothesis {index}", "", f"**Summary.** {hypothesis.overview}", "", "**Statistical tests.**", ""]
    lines.append("| Entity | Comparison | Test | logFC | p | p_adj | r |")
    lines.append("|---|---|---|---|---|---|---|")
    for claim in hypothesis.stat_summary:
        numbers = " | ".join(_format_value(getattr(claim, name)) for name in NUMERIC_CLAIM_FIELDS)
        lines.append(f"| {claim.entity} | {claim.comparison} | {claim.test} | {numbers} |")
    lines += ["", f"**Hypothesis.** {hypothesis.statement}"]
    if hypothesis.untraceable:
        lines += ["", f"> Untraceable values: {', '.join(hypothesis.untraceable)}"]
    return "\n".join(lines)


def render_markdown(journal: RunJournal) -> str:
    """Markdown run report."""
    lines = ["# Research run report", ""]
    if journal.description:
        lines += ["## Data", "", journal.description.get("narrative") or "", ""]

    objectives: dict[int, dict] = {}
    for event in journal.events_of("objective_activated", "objective_abandoned"):
        objectives[event["objective"]["id"]] = dict(event["objective"])
    for event in journal.events_of("objective_completed"):
        objectives[event["objective_id"]]["status"] = "completed"

    executed: dict[int, list[str]] = {}
    for event in journal.events_of("workflow_executed", "workflow_failed"):
        mark = "" if event["kind"] == "workflow_executed" else " (failed)"
        executed.setdefault(event["objective_id"], []).append(f"{event['call']['workflow']}{mark}")

    proposed: dict[int, list[Hypothesis]] = {}
    for event in journal.events_of("hypotheses_proposed"):
        proposed[event["objective_id"]] = [Hypothesis.from_dict(h) for h in event["hypotheses"]]

    counter = 1
    for oid in sorted(objectives):
        objective = objectives[oid]
        lines += [f"## Objective {oid}: {objective['text']}", "", f"Status: {objective['status']} ({objective['origin']})", ""]
        workflows = executed.get(oid, [])
        if workflows:
            lines += ["Workflows: " + ", ".join(workflows), ""]
        for hypothesis in proposed.get(oid, []):
            lines += [hypothesis_block(counter, hypothesis), ""]
            counter += 1

    completed = journal.events_of("run_completed")
    if completed:
        summary = completed[-1]
        lines += [
            "## Run",
            "",
            f"- LLM requests: {summary['llm_requests']}",
            f"- Tokens: {summary['total_tokens']}",
            f"- Estimated cost: ${summary['estimated_cost']:.4f}",
        ]
    lines += [f"- Journal digest: `{journal.digest()}`", ""]
    return "\n".join(lines)


def claims_frame(hypotheses: Iterable[Hypothesis]) -> pd.DataFrame:
    rows = []
    for i, hypothesis in enumerate(hypotheses, start=1):
        for claim in hypothesis.stat_summary:
            rows.append(
                {
                    "hypothesis_id": i,
                    "objective_id": hypothesis.objective_id,
                    "entity": claim.entity,
                    "comparison": claim.comparison,
                    "test": claim.test,
                    **{name: getattr(claim, name) for name in NUMERIC_CLAIM_FIELDS},
                    "traceable": hypothesis.traceable,
                }
            )
    return pd.DataFrame(rows, columns=list(CLAIM_COLUMNS))


def save_hypotheses(hypotheses: Iterable[Hypothesis], path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump([h.to_dict() for h in hypotheses], f, indent=2, ensure_ascii=False)
    return path


def load_hypotheses(path: Path) -> list[Hypothesis]:
    """Hypotheses from a JSON list, or from a journal file."""
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise JournalError(f"Cannot read hypotheses from {path}: {e}")
    if isinstance(data, dict) and "events" in data:
        return hypotheses_from_journal(RunJournal.from_dict(data))
    if not isinstance(data, list):
        raise JournalError(f"{path} holds neither a hypothesis list nor a journal")
    try:
        return [Hypothesis.from_dict(h) for h in data]
    except (KeyError, TypeError, ValueError) as e:
        raise JournalError(f"Malformed hypothesis in {path}: {e}")


def write_reports(journal: RunJournal, out_dir: Path, stem: str = "run") -> list[Path]:
    """Write <stem>.md, <stem>_claims.csv and <stem>_hypotheses.json; returns their paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    hypotheses = hypotheses_from_journal(journal)

    md_path = out_dir / f"{stem}.md"
    md_path.write_text(render_markdown(journal), encoding="utf-8")

    csv_path = out_dir / f"{stem}_claims.csv"
    claims_frame(hypotheses).to_csv(csv_path, index=False, encoding="utf-8-sig")

    json_path = save_hypotheses(hypotheses, out_dir / f"{stem}_hypotheses.json")
    logger.info(f"[Pipeline] Reports written to {out_dir} ({len(hypotheses)} hypotheses)")
    return [md_path, csv_path, json_path]
