"""
The workflow catalog: fifteen specs, their bodies, and parameter validation.
"""

from __future__ import annotations

import logging
from typing import Any, Callable, Optional

from ..dataset.models import SingleCellDataset
from ..statkit import REST
from . import clinical, external, single_cell
from .models import (
    DataKind,
    NoPluginRegistered,
    ParamSpec,
    ParamValidation,
    UnknownProtein,
    UnknownWorkflow,
    WorkflowContext,
    WorkflowResult,
    WorkflowSpec,
)

logger = logging.getLogger(__name__)

WorkflowBody = Callable[[WorkflowContext, dict], WorkflowResult]


_FIELD = ParamSpec("field", "field", "Categorical metadata field whose values define the sample groups")
_CONTRASTS = ParamSpec(
    "contrasts", "contrasts", "Pairs [A, B] of values of `field` to compare; REST stands for all other values"
)


# =============================================================================
# Catalog
# =============================================================================

WORKFLOW_SPECS: tuple[WorkflowSpec, ...] = (
    # single-cell
    WorkflowSpec(
        "Clustering and Annotation",
        "single_cell",
        "Performs FlowSOM-style clustering, top protein marker identification, and cell type labeling.",
        mutates=True,
    ),
    WorkflowSpec(
        "Annotation Refinement",
        "single_cell",
        "Further clusters one annotated cell type and labels its sub-populations.",
        (ParamSpec("cell_type", "cell_type", "Annotated cell type to refine (chosen automatically when omitted)", required=False),),
        mutates=True,
    ),
    WorkflowSpec(
        "Visualization",
        "single_cell",
        "Visualizes protein abundances: per-sample heatmap and per-condition distributions.",
        (ParamSpec("proteins", "proteins", "Proteins to plot (chosen automatically when omitted)", required=False),),
    ),
    WorkflowSpec(
        "Differential Abundance (Cell Types)",
        "single_cell",
        "Compares cell type proportions between sample groups.",
        (_FIELD, _CONTRASTS),
    ),
    WorkflowSpec(
        "Stratified Differential Expression",
        "single_cell",
        "Compares protein expression between sample groups within each selected cell type.",
        (
            _FIELD,
            _CONTRASTS,
            ParamSpec("focus_cell_types", "cell_types", "Cell types to test (chosen automatically when omitted)", required=False),
        ),
    ),
    WorkflowSpec(
        "Differential Expression",
        "single_cell",
        "Compares protein expression between sample groups across all cells.",
        (_FIELD, _CONTRASTS),
    ),
    # clinical
    WorkflowSpec(
        "Differential Expression Analysis",
        "clinical",
        "Compares protein abundance between groups of patients.",
        (_FIELD, _CONTRASTS),
        tool="differential_expression",
    ),
    WorkflowSpec(
        "Consensus Clustering",
        "clinical",
        "Identifies patient subtypes by consensus NMF clustering and adds them as a metadata field.",
        tool="consensus_clustering",
        mutates=True,
    ),
    WorkflowSpec(
        "Enrichment Analysis",
        "clinical",
        "Runs over-representation and gene set enrichment analysis on differential expression results "
        "(runs differential expression first when needed).",
        (
            ParamSpec("field", "field", "Categorical field for the differential expression step", required=False),
            ParamSpec("contrasts", "contrasts", "Contrasts for the differential expression step", required=False),
        ),
        tool="enrichment",
    ),
    WorkflowSpec(
        "Survival Analysis",
        "clinical",
        "Tests the association of protein abundance with patient survival.",
        (
            ParamSpec("analysis_type", "choice", "Threshold split with log-rank test, or Cox regression", choices=("discrete", "continuous")),
            ParamSpec("survival_time_field", "numeric_field", "Follow-up time field", required=False),
            ParamSpec("event_field", "numeric_field", "Event status field (1 = event, 0 = censored)", required=False),
            ParamSpec("molecules", "proteins", "Proteins to test (top differential proteins when omitted)", required=False),
        ),
        tool="survival",
    ),
    WorkflowSpec(
        "Clinical Correlation",
        "clinical",
        "Correlates protein abundance with a numeric clinical feature.",
        (
            ParamSpec("molecules", "proteins", "Proteins to correlate"),
            ParamSpec("clinical_feature", "numeric_field", "Numeric clinical field"),
        ),
        tool="clinical_correlation",
    ),
    WorkflowSpec(
        "Molecule Correlation",
        "clinical",
        "Correlates two lists of proteins with each other.",
        (
            ParamSpec("molecules_x", "proteins", "First list of proteins"),
            ParamSpec("molecules_y", "proteins", "Second list of proteins"),
        ),
        tool="molecule_correlation",
    ),
    # external
    WorkflowSpec(
        "External Correlation",
        "external",
        "Correlates two lists of molecules in an external reference cohort.",
        (
            ParamSpec("dataset_name", "external_dataset", "External reference cohort"),
            ParamSpec("molecules_x", "molecules", "First list of molecules"),
            ParamSpec("molecules_y", "molecules", "Second list of molecules"),
        ),
    ),
    WorkflowSpec(
        "External Survival",
        "external",
        "Tests molecules for association with survival in an external reference cohort.",
        (
            ParamSpec("dataset_name", "external_dataset", "External reference cohort"),
            ParamSpec("molecules", "molecules", "Molecules to test"),
            ParamSpec("analysis_type", "choice", "Threshold split or Cox regression", required=False, choices=("discrete", "continuous")),
        ),
    ),
    WorkflowSpec(
        "THPA",
        "external",
        "Looks up a protein's classes, pathways, molecular functions and prognostic cancers in The Human Protein Atlas.",
        (ParamSpec("protein", "text", "Protein symbol (chosen automatically when omitted)", required=False),),
    ),
)

WORKFLOW_BODIES: dict[str, WorkflowBody] = {
    "Clustering and Annotation": single_cell.clustering_and_annotation,
    "Annotation Refinement": single_cell.annotation_refinement,
    "Visualization": single_cell.visualization,
    "Differential Abundance (Cell Types)": single_cell.differential_abundance,
    "Stratified Differential Expression": single_cell.stratified_differential_expression,
    "Differential Expression": single_cell.differential_expression,
    "Differential Expression Analysis": clinical.differential_expression_analysis,
    "Consensus Clustering": clinical.consensus_clustering,
    "Enrichment Analysis": clinical.enrichment_analysis,
    "Survival Analysis": clinical.survival_analysis,
    "Clinical Correlation": clinical.clinical_correlation,
    "Molecule Correlation": clinical.molecule_correlation,
    "External Correlation": external.external_correlation,
    "External Survival": external.external_survival,
    "THPA": external.thpa,
}


class WorkflowRegistry:
    """
    Name -> spec lookup and the planner-facing catalog.

    With direct_tools, clinical workflows are offered to the planner under
    their tool names instead of as grouped workflows.
    """

    def __init__(self, specs: tuple[WorkflowSpec, ...] = WORKFLOW_SPECS, direct_tools: bool = False):
        names = [s.name for s in specs]
        if len(names) != len(set(names)):
            raise ValueError("Workflow names must be unique")
        self._specs = {s.name: s for s in specs}
        self._tools = {s.tool: s for s in specs if s.tool}
        self.direct_tools = direct_tools

    def list(self) -> list[str]:
        return list(self._specs)

    def specs(self, data_kind: Optional[DataKind] = None) -> list[WorkflowSpec]:
        return [s for s in self._specs.values() if data_kind is None or s.data_kind == data_kind]

    def get(self, name: str) -> WorkflowSpec:
        """Spec by workflow name (case-insensitive) or, in direct-tools mode, by tool name."""
        if name in self._specs:
            return self._specs[name]
        folded = name.strip().lower()
        for spec in self._specs.values():
            if spec.name.lower() == folded:
                return spec
        if self.direct_tools and folded in self._tools:
            return self._tools[folded]
        raise UnknownWorkflow(name)

    def body(self, name: str) -> WorkflowBody:
        return WORKFLOW_BODIES[self.get(name).name]

    def display_name(self, spec: WorkflowSpec) -> str:
        return spec.tool if self.direct_tools and spec.tool else spec.name

    def available_for(self, dataset_kind: str) -> list[WorkflowSpec]:
        return [s for s in self._specs.values() if s.data_kind in (dataset_kind, "external")]

    def catalog_text(self, dataset_kind: str) -> str:
        """Numbered catalog of the workflows usable on this kind of dataset."""
        lines = []
        for i, spec in enumerate(self.available_for(dataset_kind), start=1):
            lines.append(f"{i}. {self.display_name(spec)}: {spec.description}")
            if spec.params:
                params = ", ".join(p.name + ("" if p.required else " (optional)") for p in spec.params)
                lines.append(f"   Parameters: {params}")
        return "\n".join(lines)


# =============================================================================
# Parameter validation
# =============================================================================


def _as_str_list(spec: ParamSpec, value: Any) -> list[str]:
    if isinstance(value, str):
        value = [v.strip() for v in value.split(",")]
    if not isinstance(value, (list, tuple)) or not value:
        raise ParamValidation(spec.name, "expected a nonempty list of names")
    items = []
    for item in value:
        if not isinstance(item, str) or not item.strip():
            raise ParamValidation(spec.name, f"invalid entry {item!r}")
        if item.strip() not in items:
            items.append(item.strip())
    return items


def _check_field(spec: ParamSpec, value: Any, dataset, kind: str) -> str:
    if not isinstance(value, str):
        raise ParamValidation(spec.name, "expected a metadata field name")
    types = dataset.meta.types
    if value not in types:
        raise ParamValidation(spec.name, f"unknown metadata field {value!r} (fields: {', '.join(types)})")
    if types[value] != kind:
        raise ParamValidation(spec.name, f"field {value!r} is {types[value]}, expected {kind}")
    return value


def _check_contrasts(spec: ParamSpec, value: Any, dataset, field: Optional[str]) -> list[list[str]]:
    if field is None:
        raise ParamValidation(spec.name, "contrasts need a `field` parameter")
    if not isinstance(value, (list, tuple)) or not value:
        raise ParamValidation(spec.name, "expected a nonempty list of [A, B] pairs")
    levels = set(dataset.meta.levels(field))
    pairs = []
    for pair in value:
        if not isinstance(pair, (list, tuple)) or len(pair) != 2:
            raise ParamValidation(spec.name, f"contrast {pair!r} is not a pair")
        a, b = (str(side) for side in pair)
        if a == REST and b == REST:
            raise ParamValidation(spec.name, "a contrast cannot have REST on both sides")
        if a == b:
            raise ParamValidation(spec.name, f"contrast compares {a!r} with itself")
        for side in (a, b):
            if side != REST and side not in levels:
                raise ParamValidation(
                    spec.name, f"{side!r} is not a value of {field!r} (values: {', '.join(sorted(levels))})"
                )
        pairs.append([a, b])
    return pairs


def _known_cell_types(dataset) -> Optional[list[str]]:
    if isinstance(dataset, SingleCellDataset) and single_cell.FLOWSOM_TYPES in dataset.cell_types:
        return sorted(set(dataset.cell_types[single_cell.FLOWSOM_TYPES].values()))
    return None


def validate_call(spec: WorkflowSpec, params: Optional[dict], dataset, plugins=None) -> dict:
    """
    Check a call's parameters against the spec and the dataset.

    Returns:
        Normalized parameters (optional ones that were null removed).

    Raises:
        ParamValidation, UnknownProtein, NoPluginRegistered
    """
    params = {k: v for k, v in (params or {}).items() if v is not None and v != "" and v != []}
    for name in params:
        if spec.param(name) is None:
            raise ParamValidation(name, f"not a parameter of {spec.name!r}")
    for p in spec.params:
        if p.required and p.name not in params:
            raise ParamValidation(p.name, "required parameter is missing")

    normalized: dict[str, Any] = {}
    # field first: contrasts are checked against it
    ordered = sorted(spec.params, key=lambda p: p.type != "field")
    for p in ordered:
        if p.name not in params:
            continue
        value = params[p.name]
        if p.type == "field":
            normalized[p.name] = _check_field(p, value, dataset, "categorical")
        elif p.type == "numeric_field":
            normalized[p.name] = _check_field(p, value, dataset, "numeric")
        elif p.type == "contrasts":
            normalized[p.name] = _check_contrasts(p, value, dataset, normalized.get("field"))
        elif p.type == "cell_type":
            if not isinstance(value, str):
                raise ParamValidation(p.name, "expected a cell type name")
            known = _known_cell_types(dataset)
            if known is not None and value not in known:
                raise ParamValidation(p.name, f"{value!r} is not an annotated cell type ({', '.join(known)})")
            normalized[p.name] = value
        elif p.type == "cell_types":
            items = _as_str_list(p, value)
            known = _known_cell_types(dataset)
            unknown = [i for i in items if known is not None and i not in known]
            if unknown:
                raise ParamValidation(p.name, f"not annotated cell types: {unknown}")
            normalized[p.name] = items
        elif p.type == "proteins":
            items = _as_str_list(p, value)
            for item in items:
                if item not in dataset.proteins:
                    raise UnknownProtein(item)
            normalized[p.name] = items
        elif p.type == "molecules":
            normalized[p.name] = _as_str_list(p, value)
        elif p.type == "choice":
            if value not in p.choices:
                raise ParamValidation(p.name, f"{value!r} is not one of {', '.join(p.choices)}")
            normalized[p.name] = value
        elif p.type == "external_dataset":
            if not isinstance(value, str):
                raise ParamValidation(p.name, "expected a dataset name")
            if plugins is None:
                raise NoPluginRegistered("No external-data plugins are registered")
            plugins.get(value)
            normalized[p.name] = value
        else:
            if not isinstance(value, str):
                raise ParamValidation(p.name, "expected text")
            normalized[p.name] = value.strip()
    return normalized
