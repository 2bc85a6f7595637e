"""
Prompt template library.

Templates live as text files under llm/prompts/. Slots are written
`<name>` with a lowercase identifier; any other angle-bracket text (such as
`<cell type name>` or `<0/1/2/3/4/5>`) is literal prompt text.

The annotation, refinement and five evaluation templates are verbatim
transcriptions and must stay byte-identical outside their slots. The rest
are house-written.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Mapping

from .errors import MissingSlot, UnknownTemplate

logger = logging.getLogger(__name__)


SLOT_PATTERN = re.compile(r"<([a-z][a-z0-9_]*)>")

VERBATIM_TEMPLATES = (
    "cell_type_annotation",
    "annotation_refinement",
    "eval_paper_alignment",
    "eval_literature_alignment",
    "eval_literature_novelty",
    "eval_logical_coherence",
    "eval_evaluability",
)

HOUSE_TEMPLATES = (
    "data_description",
    "plan_objectives",
    "plan_workflows",
    "select_parameters",
    "interpret_result",
    "update_workflow_plan",
    "update_objectives",
    "propose_hypotheses",
    "select_refinement_cell_type",
    "select_proteins",
    "select_focus_cell_types",
    "select_thpa_protein",
    "pubmed_query",
)

TEMPLATE_IDS = VERBATIM_TEMPLATES + HOUSE_TEMPLATES


@dataclass(frozen=True)
class PromptTemplate:
    id: str
    body: str
    required_slots: frozenset[str]
    verbatim: bool


@lru_cache(maxsize=None)
def get_template(template_id: str) -> PromptTemplate:
    """Load a template by id."""
    if template_id not in TEMPLATE_IDS:
        raise UnknownTemplate(f"Unknown prompt template: {template_id!r}")
    body = (
        resources.files("protlab.llm")
        .joinpath("prompts", f"{template_id}.txt")
        .read_text(encoding="utf-8")
    )
    return PromptTemplate(
        id=template_id,
        body=body,
        required_slots=frozenset(SLOT_PATTERN.findall(body)),
        verbatim=template_id in VERBATIM_TEMPLATES,
    )


def render(template_id: str, bindings: Mapping[str, object]) -> str:
    """
    Substitute every slot of a template in one pass.

    Bound values are inserted as-is and never re-scanned for slots. Extra
    bindings are ignored.

    Raises:
        UnknownTemplate, MissingSlot
    """
    template = get_template(template_id)
    for slot in sorted(template.required_slots):
        if slot not in bindings:
            raise MissingSlot(slot, template_id)
    return SLOT_PATTERN.sub(lambda m: str(bindings[m.group(1)]), template.body)
