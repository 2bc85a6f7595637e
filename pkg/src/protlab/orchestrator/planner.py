"""
LLM planning steps.

Each function renders one template, parses the response with a validating
parser (unusable answers are re-prompted by complete_with_retry) and notes
what it dropped or clamped in the journal when one is given.
"""

from __future__ import annotations

import logging
from dataclasses import replace
from typing import Optional, Sequence

from ..dataset.models import DataDescription, Dataset
from ..dataset.ops import structured_summary
from ..llm.client import ChatClient
from ..llm.errors import ParseFailure
from ..llm.parsing import parse_hypotheses, parse_json_object, parse_numbered_list
from ..workflows.common import interpret_result
from ..workflows.models import (
    UnknownWorkflow,
    WorkflowCall,
    WorkflowError,
    WorkflowResult,
    WorkflowSpec,
)
from ..workflows.registry import WorkflowRegistry, validate_call
from ..workflows.single_cell import FLOWSOM_TYPES
from .models import EmptyPlan, Hypothesis, Objective, RunConfig

logger = logging.getLogger(__name__)

NO_HISTORY = "No analyses have been run yet."


def _note(journal, kind: str, **payload) -> None:
    if journal is not None:
        journal.record(kind, **payload)


def description_text(description: DataDescription) -> str:
    """Structured summary plus the narrative, as shown to every planning prompt."""
    if description.narrative:
        return f"{description.to_text()}\n\n{description.narrative}"
    return description.to_text()


# =============================================================================
# Description and objectives
# =============================================================================


def generate_description(dataset: Dataset, llm: ChatClient) -> DataDescription:
    structured = structured_summary(dataset)
    narrative = llm.complete("data_description", {"structured_summary": structured.to_text()})
    return replace(structured, narrative=narrative.strip())


def plan_objectives(
    description: DataDescription,
    llm: ChatClient,
    config: RunConfig,
    journal=None,
) -> list[Objective]:
    items = llm.complete_with_retry(
        "plan_objectives",
        {"description": description_text(description), "max_objectives": config.max_objectives},
        parse_numbered_list,
        budget=config.retry_budget,
    )
    if len(items) > config.max_objectives:
        logger.info(f"[Pipeline] {len(items)} objectives proposed; keeping {config.max_objectives}")
        _note(journal, "objectives_truncated", proposed=len(items), kept=config.max_objectives)
        items = items[: config.max_objectives]
    return [Objective(id=i + 1, text=text) for i, text in enumerate(items)]


# =============================================================================
# Workflow plans
# =============================================================================


def resolve_plan(
    items: Sequence[str],
    registry: WorkflowRegistry,
    dataset_kind: str,
) -> tuple[list[str], list[str]]:
    """Workflow names usable on this dataset kind, and the items that are not."""
    usable = {s.name for s in registry.available_for(dataset_kind)}
    names, dropped = [], []
    for item in items:
        try:
            spec = registry.get(item)
        except UnknownWorkflow:
            dropped.append(item)
            continue
        if spec.name in usable:
            names.append(spec.name)
        else:
            dropped.append(item)
    return names, dropped


def _clamp(names: list[str], budget: int, journal, step: str) -> list[str]:
    if len(names) > budget:
        logger.info(f"[Pipeline] {step}: plan of {len(names)} clamped to {budget}")
        _note(journal, "plan_clamped", step=step, planned=len(names), budget=budget)
        return names[:budget]
    return names


def plan_workflows(
    objective: Objective,
    description: DataDescription,
    registry: WorkflowRegistry,
    llm: ChatClient,
    dataset_kind: str,
    budget: int,
    history: str = "",
    retry_budget: int = 3,
    journal=None,
) -> list[WorkflowCall]:
    """
    Parameterless call skeletons for the planned workflows.

    Raises:
        RetriesExhausted, EmptyPlan (every planned name unknown)
    """
    items = llm.complete_with_retry(
        "plan_workflows",
        {
            "description": description_text(description),
            "objective": objective.text,
            "history": history or NO_HISTORY,
            "workflow_catalog": registry.catalog_text(dataset_kind),
            "max_workflows": budget,
        },
        parse_numbered_list,
        budget=retry_budget,
    )
    names, dropped = resolve_plan(items, registry, dataset_kind)
    if dropped:
        logger.warning(f"[Pipeline] Dropped unknown workflows from plan: {dropped}")
        _note(journal, "plan_dropped", step="plan_workflows", dropped=dropped)
    if not names:
        raise EmptyPlan(f"No usable workflow in plan for objective {objective.id}: {items}")
    return [WorkflowCall(name) for name in _clamp(names, budget, journal, "plan_workflows")]


def parameter_options(spec: WorkflowSpec, dataset: Dataset, plugins=None) -> str:
    """The values each parameter may take on this dataset."""
    meta = dataset.meta
    lines = []
    types = {p.type for p in spec.params}
    if types & {"field", "contrasts"}:
        for name in meta.fields:
            if meta.types[name] == "categorical":
                lines.append(f"Categorical field {name}: {', '.join(meta.levels(name))}")
    if "numeric_field" in types:
        numeric = [n for n in meta.fields if meta.types[n] == "numeric"]
        lines.append(f"Numeric fields: {', '.join(numeric) or 'none'}")
    if types & {"cell_type", "cell_types"} and FLOWSOM_TYPES in getattr(dataset, "cell_types", {}):
        lines.append(f"Cell types: {', '.join(sorted(set(dataset.cell_types[FLOWSOM_TYPES].values())))}")
    if types & {"proteins", "molecules"}:
        lines.append(f"Proteins: {', '.join(dataset.proteins)}")
    if "external_dataset" in types:
        datasets = plugins.datasets() if plugins is not None else []
        lines.append(f"External datasets: {', '.join(datasets) or 'none'}")
    return "\n".join(lines)


def select_parameters(
    call: WorkflowCall,
    description: DataDescription,
    spec: WorkflowSpec,
    llm: ChatClient,
    dataset: Dataset,
    objective: Objective,
    history: str = "",
    plugins=None,
    retry_budget: int = 3,
) -> WorkflowCall:
    """
    Fill a call skeleton's parameters; invalid choices are re-prompted.

    Raises:
        RetriesExhausted
    """
    if not spec.params:
        return WorkflowCall(spec.name, dict(call.params))

    def parse(raw: str) -> dict:
        chosen = parse_json_object(raw)
        try:
            return validate_call(spec, chosen, dataset, plugins)
        except WorkflowError as e:
            raise ParseFailure(str(e))

    schema = spec.schema_text()
    options = parameter_options(spec, dataset, plugins)
    params = llm.complete_with_retry(
        "select_parameters",
        {
            "description": description_text(description),
            "objective": objective.text,
            "history": history or NO_HISTORY,
            "workflow_name": spec.name,
            "parameter_schema": f"{schema}\n\nAllowed values:\n{options}" if options else schema,
        },
        parse,
        budget=retry_budget,
    )
    return WorkflowCall(spec.name, params)


def result_digest(result: WorkflowResult) -> str:
    text = f"Workflow: {result.workflow}\n{result.numeric_summary}"
    if result.interpretation:
        text += f"\nInterpretation: {result.interpretation}"
    return text


def update_workflow_plan(
    objective: Objective,
    remaining: Sequence[WorkflowCall],
    latest: WorkflowResult,
    registry: WorkflowRegistry,
    llm: ChatClient,
    dataset_kind: str,
    budget: int,
    retry_budget: int = 3,
    journal=None,
) -> list[WorkflowCall]:
    """
    Revised remainder of the plan; may be empty.

    Raises:
        RetriesExhausted (callers keep the previous plan)
    """
    remaining_text = "\n".join(f"{i}. {c.workflow}" for i, c in enumerate(remaining, start=1)) or "NONE"
    items = llm.complete_with_retry(
        "update_workflow_plan",
        {
            "objective": objective.text,
            "latest_result": result_digest(latest),
            "remaining_plan": remaining_text,
            "workflow_catalog": registry.catalog_text(dataset_kind),
            "max_workflows": budget,
        },
        lambda raw: parse_numbered_list(raw, allow_none=True),
        budget=retry_budget,
    )
    names, dropped = resolve_plan(items, registry, dataset_kind)
    if dropped:
        _note(journal, "plan_dropped", step="update_workflow_plan", dropped=dropped)
    return [WorkflowCall(name) for name in _clamp(names, budget, journal, "update_workflow_plan")]


def update_objectives(
    remaining: Sequence[Objective],
    objective_results: str,
    llm: ChatClient,
    max_remaining: int,
    retry_budget: int = 3,
    journal=None,
) -> list[str]:
    """
    Revised texts for the objectives still to run, at most max_remaining.

    Raises:
        RetriesExhausted (callers keep the previous objectives)
    """
    remaining_text = "\n".join(f"{i}. {o.text}" for i, o in enumerate(remaining, start=1)) or "NONE"
    items = llm.complete_with_retry(
        "update_objectives",
        {
            "objective_results": objective_results,
            "remaining_objectives": remaining_text,
            "max_remaining": max_remaining,
        },
        lambda raw: parse_numbered_list(raw, allow_none=True),
        budget=retry_budget,
    )
    if len(items) > max_remaining:
        logger.info(f"[Pipeline] Objective update proposed {len(items)}; cap allows {max_remaining}")
        _note(journal, "objectives_truncated", proposed=len(items), kept=max_remaining)
        items = items[:max_remaining]
    return items


def propose_hypotheses(
    objective: Objective,
    results: Sequence[WorkflowResult],
    description: DataDescription,
    llm: ChatClient,
    config: RunConfig,
    char_budget: Optional[int] = None,
) -> list[Hypothesis]:
    """
    At most hypotheses_per_objective hypotheses grounded in the results.

    Raises:
        RetriesExhausted
    """
    if not results:
        raise ValueError("Hypotheses need at least one executed workflow")
    text = "\n\n".join(result_digest(r) for r in results)
    if char_budget is not None and len(text) > char_budget:
        text = text[:char_budget]
    hypotheses = llm.complete_with_retry(
        "propose_hypotheses",
        {
            "count": config.hypotheses_per_objective,
            "description": description_text(description),
            "objective": objective.text,
            "results": text,
        },
        parse_hypotheses,
        budget=config.retry_budget,
    )
    if len(hypotheses) > config.hypotheses_per_objective:
        hypotheses = hypotheses[: config.hypotheses_per_objective]
    return [replace(h, objective_id=objective.id) for h in hypotheses]


__all__ = [
    "description_text",
    "generate_description",
    "interpret_result",
    "parameter_options",
    "plan_objectives",
    "plan_workflows",
    "propose_hypotheses",
    "resolve_plan",
    "result_digest",
    "select_parameters",
    "update_objectives",
    "update_workflow_plan",
]
