"""
Workflow dispatch.

execute() validates a call, checks the dataset kind, runs the body, writes
its tables as CSV next to the plot artifacts and journals the outcome. A
failing body leaves the context's dataset as it was before the call.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Optional, Protocol

from ..llm.errors import ReplayMiss
from .common import slugify
from .models import WorkflowCall, WorkflowContext, WorkflowError, WorkflowFailed, WorkflowResult, WrongDataKind
from .registry import WorkflowRegistry, validate_call

logger = logging.getLogger(__name__)


class EventSink(Protocol):
    def record(self, kind: str, **payload) -> None: ...


def _save_tables(result: WorkflowResult, table_dir: Path, step: int) -> list[str]:
    table_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for name in sorted(result.tables):
        path = table_dir / f"{step:02d}_{slugify(result.workflow)}_{slugify(name)}.csv"
        path.write_text(result.table_csv(name), encoding="utf-8")
        written.append(str(path))
    return written


def execute(
    call: WorkflowCall,
    ctx: WorkflowContext,
    registry: WorkflowRegistry,
    journal: Optional[EventSink] = None,
    table_dir: Optional[Path] = None,
) -> WorkflowResult:
    """
    Run one workflow call against the context's dataset.

    Raises:
        UnknownWorkflow, ParamValidation, WrongDataKind, DependencyMissing and
        other WorkflowErrors as raised by the body; WorkflowFailed wrapping any
        other error; ReplayMiss unwrapped so a replay run halts.
    """
    try:
        spec = registry.get(call.workflow)
        if spec.data_kind != "external" and spec.data_kind != ctx.dataset.kind:
            raise WrongDataKind(
                f"{spec.name!r} needs a {spec.data_kind} dataset, got {ctx.dataset.kind}"
            )
        params = validate_call(spec, call.params, ctx.dataset, ctx.plugins)
    except WorkflowError as e:
        logger.warning(f"[Workflow] Rejected {call.workflow!r}: {e}")
        if journal is not None:
            journal.record("workflow_rejected", call=call.to_dict(), error=f"{type(e).__name__}: {e}")
        raise

    ctx.step += 1
    before = ctx.dataset
    logger.info(f"[Workflow] Step {ctx.step}: {spec.name} {params}")
    try:
        result = registry.body(spec.name)(ctx, params)
    except ReplayMiss:
        ctx.dataset = before
        raise
    except Exception as e:
        ctx.dataset = before
        error = e if isinstance(e, WorkflowError) else WorkflowFailed(spec.name, e)
        logger.warning(f"[Workflow] {spec.name} failed: {error}")
        if journal is not None:
            journal.record(
                "workflow_failed",
                step=ctx.step,
                call=WorkflowCall(spec.name, params).to_dict(),
                error=f"{type(error).__name__}: {error}",
            )
        if error is e:
            raise
        raise error from e

    if table_dir is not None:
        result.artifacts.extend(_save_tables(result, Path(table_dir), ctx.step))
    if journal is not None:
        journal.record(
            "workflow_executed",
            step=ctx.step,
            call=WorkflowCall(spec.name, params).to_dict(),
            result=result.to_record(),
        )
    return result
