"""Helpers shared by the workflow bodies: result assembly, interpretation, LLM picks."""

from __future__ import annotations

import logging
import re
from pathlib import Path
from typing import Mapping, Optional, Sequence

import pandas as pd

from ..llm.client import ChatClient
from ..llm.parsing import parse_comma_list, parse_labeled_value
from .models import WorkflowContext, WorkflowResult
from .summary import DEFAULT_MAX_ROWS, is_low_signal, summarize_tables

logger = logging.getLogger(__name__)

NO_RESULTS = "The workflow produced no result rows."


def slugify(text: str) -> str:
    return re.sub(r"[^a-z0-9]+", "_", text.lower()).strip("_")


def artifact_stem(ctx: WorkflowContext, workflow: str, name: str) -> Optional[Path]:
    """Path stem for a plot artifact, or None when the run keeps no artifacts."""
    if ctx.artifact_dir is None:
        return None
    return Path(ctx.artifact_dir) / f"{ctx.step:02d}_{slugify(workflow)}_{slugify(name)}"


def interpret_result(
    llm: ChatClient,
    workflow: str,
    numeric_summary: str,
    objective: str,
    attachments: Sequence[str] = (),
) -> str:
    """LLM reading of a result digest in the light of the current objective."""
    return llm.complete(
        "interpret_result",
        {
            "objective": objective or "General exploration of the dataset.",
            "workflow_name": workflow,
            "numeric_summary": numeric_summary or NO_RESULTS,
        },
        attachments=attachments,
    ).strip()


def build_result(
    ctx: WorkflowContext,
    workflow: str,
    tables: Mapping[str, pd.DataFrame],
    artifacts: Sequence[str] = (),
    dataset_delta: Optional[dict] = None,
    interpretation: Optional[str] = None,
    max_rows: int = DEFAULT_MAX_ROWS,
) -> WorkflowResult:
    """
    Digest the tables and attach an interpretation.

    An interpretation passed in is kept as is; otherwise the LLM interprets
    the numeric summary, with PNG artifacts attached when the transport
    takes images.
    """
    tables = dict(tables)
    summary = summarize_tables(tables, max_rows=max_rows, char_budget=ctx.char_budget)
    if interpretation is None:
        images = [a for a in artifacts if a.endswith(".png")] if ctx.attach_images else []
        interpretation = interpret_result(ctx.llm, workflow, summary, ctx.objective, images)
    low_signal = is_low_signal(tables)
    if low_signal:
        logger.info(f"[Workflow] {workflow}: no adjusted p-value below 0.05")
    return WorkflowResult(
        workflow=workflow,
        tables=tables,
        numeric_summary=summary,
        interpretation=interpretation,
        artifacts=list(artifacts),
        dataset_delta=dict(dataset_delta or {}),
        low_signal=low_signal,
    )


# =============================================================================
# LLM picks for optional parameters
# =============================================================================


def pick_names(
    ctx: WorkflowContext,
    template_id: str,
    bindings: Mapping[str, object],
    allowed: Sequence[str],
    max_items: Optional[int] = None,
) -> list[str]:
    """Comma-separated choice among `allowed`, re-prompted on unusable answers."""
    names = ctx.llm.complete_with_retry(
        template_id,
        bindings,
        lambda raw: parse_comma_list(raw, allowed=allowed, max_items=max_items),
        budget=ctx.retry_budget,
    )
    logger.info(f"[Workflow] {template_id} chose {names}")
    return names


def pick_one(
    ctx: WorkflowContext,
    template_id: str,
    bindings: Mapping[str, object],
    label: str,
    allowed: Sequence[str],
) -> str:
    """A single `label: value` choice among `allowed`."""
    name = ctx.llm.complete_with_retry(
        template_id,
        bindings,
        lambda raw: parse_labeled_value(raw, label, allowed=allowed),
        budget=ctx.retry_budget,
    )
    logger.info(f"[Workflow] {template_id} chose {name!r}")
    return name
