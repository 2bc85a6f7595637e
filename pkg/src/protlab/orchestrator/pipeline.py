"""
The research loop.

describe -> plan objectives -> for each objective (serially):
    plan workflows -> [select parameters -> execute -> update plan]* ->
    propose hypotheses -> update remaining objectives

Workflow failures are journaled and skipped; updater failures keep the
previous plan or objective list. Only a replay miss (or dataset/config
invalidity before the loop) stops a run.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

from ..dataset.models import DataDescription, Dataset
from ..llm.client import ChatClient
from ..llm.errors import LLMError, ReplayMiss
from ..services.thpa_client import ThpaClient
from ..statkit.enrichment import GeneSetLibrary
from ..workflows.executor import execute
from ..workflows.external import PluginRegistry
from ..workflows.models import WorkflowContext, WorkflowError, WorkflowResult
from ..workflows.registry import WorkflowRegistry
from . import planner
from .journal import RunJournal
from .models import EmptyPlan, Hypothesis, Objective, OrchestratorError, RunConfig
from .traceability import check_hypothesis, numeric_cells

logger = logging.getLogger(__name__)

CHARS_PER_TOKEN = 4


@dataclass
class PipelineOutcome:
    journal: RunJournal
    description: DataDescription
    objectives: list[Objective]
    hypotheses: list[Hypothesis]
    results: dict[int, list[WorkflowResult]] = field(default_factory=dict)
    dataset: Optional[Dataset] = None


class ResearchPipeline:
    """
    Runs the hierarchical planning loop over one dataset.

    This class handles:
    - Context assembly under the token budget
    - Fail-skip workflow execution and fail-open updaters
    - Journaling every step, so prompts can be regenerated from the journal
    """

    def __init__(
        self,
        llm: ChatClient,
        config: RunConfig,
        registry: Optional[WorkflowRegistry] = None,
        plugins: Optional[PluginRegistry] = None,
        thpa: Optional[ThpaClient] = None,
        gene_sets: Sequence[GeneSetLibrary] = (),
        artifact_dir: Optional[Path] = None,
        table_dir: Optional[Path] = None,
        attach_images: bool = False,
        config_snapshot: Optional[dict] = None,
    ):
        self.llm = llm
        self.config = config
        self.registry = registry or WorkflowRegistry(
            direct_tools=config.clinical_direct_tools and config.mode == "clinical"
        )
        self.plugins = plugins
        self.thpa = thpa
        self.gene_sets = list(gene_sets)
        self.artifact_dir = artifact_dir
        self.table_dir = table_dir
        self.attach_images = attach_images
        self.journal = RunJournal(config_snapshot if config_snapshot is not None else config.to_dict())

    # =========================================================================
    # Context assembly
    # =========================================================================

    @property
    def history_budget(self) -> int:
        return self.config.context_token_budget * CHARS_PER_TOKEN

    @property
    def result_budget(self) -> int:
        # one result digest may use a quarter of the context
        return self.history_budget // 4

    def _history(self, earlier: Sequence[str], results: Sequence[WorkflowResult], failures: Sequence[str]) -> str:
        """One-line digests of earlier objectives, then this objective's results in full."""
        parts = []
        if earlier:
            parts.append("Earlier objectives:\n" + "\n".join(f"- {line}" for line in earlier))
        for result in results:
            parts.append(planner.result_digest(result))
        if failures:
            parts.append("Failed workflows:\n" + "\n".join(f"- {line}" for line in failures))
        text = "\n\n".join(parts)
        if len(text) > self.history_budget:
            text = text[-self.history_budget:]
        return text

    # =========================================================================
    # Per-objective loop
    # =========================================================================

    def _run_objective(
        self,
        objective: Objective,
        ctx: WorkflowContext,
        description: DataDescription,
        earlier: Sequence[str],
    ) -> tuple[list[WorkflowResult], list[Hypothesis]]:
        journal = self.journal.scoped(objective.id)
        kind = ctx.dataset.kind
        budget = self.config.max_workflows_per_objective
        retry = self.config.retry_budget

        results: list[WorkflowResult] = []
        failures: list[str] = []
        try:
            plan = planner.plan_workflows(
                objective, description, self.registry, self.llm, kind, budget,
                history=self._history(earlier, results, failures), retry_budget=retry, journal=journal,
            )
        except ReplayMiss:
            raise
        except (LLMError, EmptyPlan) as e:
            logger.warning(f"[Pipeline] Objective {objective.id}: planning failed: {e}")
            journal.record("planning_failed", error=f"{type(e).__name__}: {e}")
            plan = []
        journal.record("workflows_planned", plan=[c.workflow for c in plan])

        attempts = 0
        while plan and attempts < budget:
            skeleton = plan.pop(0)
            attempts += 1
            history = self._history(earlier, results, failures)
            ctx.history = history
            try:
                spec = self.registry.get(skeleton.workflow)
                call = planner.select_parameters(
                    skeleton, description, spec, self.llm, ctx.dataset, objective,
                    history=history, plugins=self.plugins, retry_budget=retry,
                )
                result = execute(call, ctx, self.registry, journal, self.table_dir)
            except ReplayMiss:
                raise
            except (LLMError, WorkflowError) as e:
                if not isinstance(e, WorkflowError):
                    journal.record("workflow_skipped", workflow=skeleton.workflow, error=f"{type(e).__name__}: {e}")
                failures.append(f"{skeleton.workflow}: {type(e).__name__}: {e}")
                continue
            results.append(result)

            if attempts >= budget:
                break
            try:
                plan = planner.update_workflow_plan(
                    objective, plan, result, self.registry, self.llm, kind, budget - attempts,
                    retry_budget=retry, journal=journal,
                )
                journal.record("plan_updated", plan=[c.workflow for c in plan])
            except ReplayMiss:
                raise
            except LLMError as e:
                logger.warning(f"[Pipeline] Workflow updater failed; keeping plan: {e}")
                journal.record("updater_failed", step="update_workflow_plan", error=f"{type(e).__name__}: {e}")

        if not results:
            journal.record("hypotheses_skipped", reason="no workflow completed")
            return results, []

        try:
            hypotheses = planner.propose_hypotheses(
                objective, results, description, self.llm, self.config, char_budget=self.history_budget
            )
        except ReplayMiss:
            raise
        except LLMError as e:
            logger.warning(f"[Pipeline] Hypothesis proposal failed: {e}")
            journal.record("hypotheses_failed", error=f"{type(e).__name__}: {e}")
            return results, []

        rows = [row for r in results for row in r.table_rows()]
        cells = numeric_cells(cell for row in rows for cell in row)
        hypotheses = [check_hypothesis(h, cells, rows) for h in hypotheses]
        for i, h in enumerate(hypotheses):
            if h.untraceable:
                journal.record("traceability_warning", hypothesis=i, values=list(h.untraceable))
        journal.record("hypotheses_proposed", hypotheses=[h.to_dict() for h in hypotheses])
        return results, hypotheses

    # =========================================================================
    # Run
    # =========================================================================

    def run(
        self,
        dataset: Dataset,
        progress_callback: Optional[Callable[[Objective, int, int], None]] = None,
    ) -> PipelineOutcome:
        """
        Run the whole loop and return the journal and hypotheses.

        Args:
            dataset: A validated dataset.
            progress_callback: Optional callback(objective, activated, max_objectives).

        Raises:
            ReplayMiss (after journaling which step missed)
        """
        journal = self.journal
        config = self.config
        if dataset.kind != config.mode:
            raise OrchestratorError(f"Run mode {config.mode!r} does not match a {dataset.kind} dataset")

        try:
            return self._run(dataset, progress_callback)
        except ReplayMiss as e:
            journal.record("run_halted", error=f"ReplayMiss: {e}", template_id=e.template_id, request_hash=e.request_hash)
            raise

    def _run(self, dataset: Dataset, progress_callback) -> PipelineOutcome:
        journal = self.journal
        config = self.config

        description = planner.generate_description(dataset, self.llm)
        journal.set_description(description.to_dict())

        try:
            queue = planner.plan_objectives(description, self.llm, config, journal=journal)
        except ReplayMiss:
            raise
        except LLMError as e:
            logger.error(f"[Pipeline] Objective planning failed: {e}")
            journal.record("planning_failed", error=f"{type(e).__name__}: {e}")
            queue = []
        journal.record("objectives_planned", objectives=[o.to_dict() for o in queue])
        next_id = max((o.id for o in queue), default=0) + 1

        state: dict = {}
        step = 0
        activated: list[Objective] = []
        earlier: list[str] = []
        all_results: dict[int, list[WorkflowResult]] = {}
        all_hypotheses: list[Hypothesis] = []

        while queue and len(activated) < config.max_objectives:
            objective = queue.pop(0)
            objective.status = "active"
            activated.append(objective)
            journal.record("objective_activated", objective=objective.to_dict())
            logger.info(f"[Pipeline] Objective {objective.id}: {objective.text}")
            if progress_callback:
                progress_callback(objective, len(activated), config.max_objectives)

            ctx = WorkflowContext(
                dataset=dataset,
                llm=self.llm,
                objective=objective.text,
                description=planner.description_text(description),
                tissue=config.tissue,
                seed=config.seed,
                retry_budget=config.retry_budget,
                artifact_dir=self.artifact_dir,
                thpa=self.thpa,
                plugins=self.plugins,
                gene_sets=self.gene_sets,
                direct_tools=self.registry.direct_tools,
                char_budget=self.result_budget,
                attach_images=self.attach_images,
                state=state,
                step=step,
            )
            results, hypotheses = self._run_objective(objective, ctx, description, earlier)
            dataset, step = ctx.dataset, ctx.step
            all_results[objective.id] = results
            all_hypotheses.extend(hypotheses)

            objective.status = "completed"
            journal.record(
                "objective_completed",
                objective_id=objective.id,
                workflows=[r.workflow for r in results],
                n_hypotheses=len(hypotheses),
            )
            findings = "; ".join(h.statement for h in hypotheses) or "no hypotheses"
            earlier.append(
                f"Objective {objective.id} ({objective.text}): ran "
                f"{', '.join(r.workflow for r in results) or 'no workflows'}; {findings}"
            )

            slots = config.max_objectives - len(activated)
            if queue and slots > 0:
                try:
                    texts = planner.update_objectives(
                        queue, "\n".join(earlier), self.llm, slots,
                        retry_budget=config.retry_budget, journal=journal,
                    )
                except ReplayMiss:
                    raise
                except LLMError as e:
                    logger.warning(f"[Pipeline] Objective updater failed; keeping objectives: {e}")
                    journal.record("updater_failed", step="update_objectives", error=f"{type(e).__name__}: {e}")
                else:
                    revised = []
                    for i, text in enumerate(texts):
                        if i < len(queue) and queue[i].text == text:
                            revised.append(queue[i])
                        else:
                            revised.append(Objective(id=next_id, text=text, origin="updater"))
                            next_id += 1
                    queue = revised
                    journal.record("objectives_updated", objectives=[o.to_dict() for o in queue])

        for objective in queue:
            objective.status = "abandoned"
            journal.record("objective_abandoned", objective=objective.to_dict())

        journal.record(
            "run_completed",
            objectives=len(activated),
            hypotheses=len(all_hypotheses),
            llm_requests=self.llm.request_count,
            total_tokens=self.llm.total_tokens,
            estimated_cost=round(self.llm.total_cost, 6),
        )
        logger.info(
            f"[Pipeline] Run complete: {len(activated)} objectives, {len(all_hypotheses)} hypotheses, "
            f"digest {journal.digest()[:12]}"
        )
        return PipelineOutcome(
            journal=journal,
            description=description,
            objectives=activated + queue,
            hypotheses=all_hypotheses,
            results=all_results,
            dataset=dataset,
        )


def run_pipeline(
    dataset: Dataset,
    config: RunConfig,
    llm: ChatClient,
    registry: Optional[WorkflowRegistry] = None,
    **kwargs,
) -> PipelineOutcome:
    """Convenience wrapper: build a ResearchPipeline and run it once."""
    return ResearchPipeline(llm, config, registry=registry, **kwargs).run(dataset)
