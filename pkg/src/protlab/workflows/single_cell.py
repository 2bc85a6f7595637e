"""
Single-cell workflows.

1. Clustering and Annotation      - SOM clustering, markers, LLM cell typing
2. Annotation Refinement          - sub-cluster one annotated population
3. Visualization                  - sample heatmap and per-condition distributions
4. Differential Abundance         - cell-type proportions between sample groups
5. Stratified Differential Expression and Differential Expression
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from ..dataset.models import SingleCellDataset, UnknownCellType
from ..dataset.ops import subset_by_cell_type
from ..llm.parsing import parse_cell_type, parse_refined_annotations
from ..statkit import diff_abundance, diff_expression, rank_markers, rows_to_frame, som_cluster
from ..statkit.tables import DA_COLUMNS, DE_COLUMNS
from . import plots
from .common import artifact_stem, build_result, pick_names, pick_one
from .models import DependencyMissing, UnknownProtein, WorkflowContext, WorkflowResult

logger = logging.getLogger(__name__)

ANNOTATION_K = 30
N_MARKERS = 10
MAX_SUB_K = 8
CELLS_PER_SUBCLUSTER = 20
MAX_VISUALIZED_PROTEINS = 6

FLOWSOM = "flowsom"
FLOWSOM_TYPES = "flowsom_types"


# =============================================================================
# Annotation
# =============================================================================


@dataclass(frozen=True)
class ClusterAnnotation:
    """Markers, first-pass name and refined name for each cluster (indexed by label)."""

    markers: list[list[str]]
    initial: list[str]
    refined: list[str]


def annotate_clusters(ctx: WorkflowContext, values: np.ndarray, labels: np.ndarray, proteins: Sequence[str]) -> ClusterAnnotation:
    """
    Name every cluster from its top markers, then unify the names in one
    refinement pass.
    """
    clusters = sorted(np.unique(labels).tolist())
    markers = [rank_markers(values, labels, list(proteins), c, N_MARKERS) for c in clusters]

    initial = []
    for cluster, cluster_markers in zip(clusters, markers):
        answer = ctx.llm.complete_with_retry(
            "cell_type_annotation",
            {"tissue": ctx.tissue, "markers": ", ".join(cluster_markers)},
            parse_cell_type,
            budget=ctx.retry_budget,
        )
        # commas would split the name in the refinement list
        initial.append(answer.cell_type.replace(",", " "))
        logger.debug(f"[Workflow] Cluster {cluster}: {answer.cell_type}")

    refined = ctx.llm.complete_with_retry(
        "annotation_refinement",
        {"cell_type_count": len(initial), "annotations": ", ".join(initial)},
        lambda raw: parse_refined_annotations(raw, expected_count=len(initial)),
        budget=ctx.retry_budget,
    )
    return ClusterAnnotation(markers=markers, initial=initial, refined=refined)


def merge_by_name(cluster_labels: np.ndarray, names: Sequence[str]) -> tuple[np.ndarray, dict[int, str]]:
    """Per-cell labels over the distinct names (sorted), plus the label -> name map."""
    distinct = sorted(set(names))
    index = {name: i for i, name in enumerate(distinct)}
    per_cluster = np.array([index[n] for n in names], dtype=int)
    return per_cluster[np.asarray(cluster_labels, dtype=int)], dict(enumerate(distinct))


def _cluster_table(labels: np.ndarray, annotation: ClusterAnnotation, label_column: str) -> pd.DataFrame:
    counts = np.bincount(labels, minlength=len(annotation.initial))
    return pd.DataFrame(
        {
            label_column: list(range(len(annotation.initial))),
            "n_cells": counts.tolist(),
            "markers": [", ".join(m) for m in annotation.markers],
            "initial_annotation": annotation.initial,
            "cell_type": annotation.refined,
        }
    )


def _cell_type_table(dataset: SingleCellDataset) -> pd.DataFrame:
    names = dataset.cell_type_labels(FLOWSOM_TYPES)
    labels = dataset.labels(FLOWSOM_TYPES)
    mapping = dataset.cell_types[FLOWSOM_TYPES]
    rows = []
    for label in sorted(mapping):
        markers = rank_markers(dataset.matrix.values, labels, list(dataset.proteins), label, N_MARKERS)
        rows.append(
            {
                "cell_type": mapping[label],
                "n_cells": int((names == mapping[label]).sum()),
                "markers": ", ".join(markers),
            }
        )
    return pd.DataFrame(rows, columns=["cell_type", "n_cells", "markers"])


def describe_cell_types(table: pd.DataFrame) -> str:
    lines = ["Annotated cell types and their top markers:"]
    for row in table.itertuples(index=False):
        lines.append(f"- {row.cell_type} ({row.n_cells} cells): {row.markers}")
    return "\n".join(lines)


def require_cell_types(dataset) -> None:
    if not isinstance(dataset, SingleCellDataset) or FLOWSOM_TYPES not in dataset.cell_types:
        raise DependencyMissing("No annotated clustering yet; run 'Clustering and Annotation' first")


def require_samples(dataset: SingleCellDataset) -> None:
    if dataset.sample_field is None:
        raise DependencyMissing("Metadata names no sample field; set run.sample_field to compare samples")


# =============================================================================
# Workflow bodies
# =============================================================================


def clustering_and_annotation(ctx: WorkflowContext, params: dict) -> WorkflowResult:
    dataset: SingleCellDataset = ctx.dataset
    clustering = som_cluster(dataset.matrix, ANNOTATION_K, seed=ctx.seed)
    labels = clustering.labels
    annotation = annotate_clusters(ctx, dataset.matrix.values, labels, dataset.proteins)

    merged, name_map = merge_by_name(labels, annotation.refined)
    updated = dataset.with_clustering(FLOWSOM, labels, dict(enumerate(annotation.refined)))
    updated = updated.with_clustering(FLOWSOM_TYPES, merged, name_map)
    ctx.dataset = updated
    logger.info(
        f"[Workflow] {clustering.n_clusters} clusters annotated as {len(name_map)} cell types"
    )

    cell_types = _cell_type_table(updated)
    tables = {
        "clusters": _cluster_table(labels, annotation, "cluster"),
        "cell_types": cell_types,
    }
    delta = {
        "clusterings": [FLOWSOM, FLOWSOM_TYPES],
        "cell_types": sorted(name_map.values()),
        "n_clusters": clustering.n_clusters,
    }
    return build_result(
        ctx, "Clustering and Annotation", tables, dataset_delta=delta,
        interpretation=describe_cell_types(cell_types),
    )


def refinement_k(n_cells: int) -> tuple[int, bool]:
    """Sub-cluster count min(8, cells // 20) with floor 2, clamped to cells // 2 on small types."""
    k = max(2, min(MAX_SUB_K, n_cells // CELLS_PER_SUBCLUSTER))
    if n_cells < 2 * k:
        return max(1, n_cells // 2), True
    return k, False


def annotation_refinement(ctx: WorkflowContext, params: dict) -> WorkflowResult:
    require_cell_types(ctx.dataset)
    dataset: SingleCellDataset = ctx.dataset
    overview = _cell_type_table(dataset)
    known = overview["cell_type"].tolist()

    cell_type = params.get("cell_type")
    if not cell_type:
        cell_type = pick_one(
            ctx,
            "select_refinement_cell_type",
            {"objective": ctx.objective, "cluster_summary": describe_cell_types(overview)},
            "Cell Type",
            known,
        )
    if cell_type not in known:
        raise UnknownCellType(f"Cell type {cell_type!r} not annotated (known: {known})")

    subset = subset_by_cell_type(dataset, FLOWSOM_TYPES, cell_type)
    sub_k, clamped = refinement_k(subset.n_cells)
    if clamped:
        logger.warning(f"[Workflow] {cell_type!r} has {subset.n_cells} cells; sub-cluster count clamped to {sub_k}")

    sub = som_cluster(subset.matrix, sub_k, seed=ctx.seed)
    annotation = annotate_clusters(ctx, subset.matrix.values, sub.labels, subset.proteins)

    names = dataset.cell_type_labels(FLOWSOM_TYPES).astype(object)
    mask = names == cell_type
    names[mask] = [annotation.refined[label] for label in sub.labels]
    distinct = sorted(set(names.tolist()))
    index = {name: i for i, name in enumerate(distinct)}
    labels = np.array([index[n] for n in names], dtype=int)
    ctx.dataset = dataset.with_clustering(FLOWSOM_TYPES, labels, dict(enumerate(distinct)))

    new_types = sorted(set(annotation.refined))
    logger.info(f"[Workflow] Refined {cell_type!r} into {new_types}")
    tables = {
        "subclusters": _cluster_table(sub.labels, annotation, "subcluster"),
        "cell_types": _cell_type_table(ctx.dataset),
    }
    delta = {
        "clustering": FLOWSOM_TYPES,
        "refined_cell_type": cell_type,
        "sub_k": sub_k,
        "clamped": clamped,
        "new_cell_types": new_types,
    }
    return build_result(ctx, "Annotation Refinement", tables, dataset_delta=delta)


def condition_field(dataset: SingleCellDataset) -> Optional[str]:
    """The categorical field that groups samples, preferring one named 'condition'."""
    candidates = [
        name for name, kind in dataset.meta.types.items()
        if kind == "categorical" and name != dataset.sample_field
    ]
    if "condition" in candidates:
        return "condition"
    return candidates[0] if candidates else None


def visualization(ctx: WorkflowContext, params: dict) -> WorkflowResult:
    dataset: SingleCellDataset = ctx.dataset
    proteins = list(params.get("proteins") or [])
    if not proteins:
        proteins = pick_names(
            ctx,
            "select_proteins",
            {
                "objective": ctx.objective,
                "proteins": ", ".join(dataset.proteins),
                "max_proteins": MAX_VISUALIZED_PROTEINS,
            },
            dataset.proteins,
            max_items=MAX_VISUALIZED_PROTEINS,
        )
    for protein in proteins:
        if protein not in dataset.proteins:
            raise UnknownProtein(protein)

    require_samples(dataset)
    frame = dataset.matrix.to_frame()
    samples = dataset.samples()
    heatmap = frame.groupby(samples, sort=True).mean()
    heatmap.index.name = "sample"

    field = condition_field(dataset)
    conditions = (
        dataset.meta.column(field).astype(str).to_numpy() if field else np.full(dataset.n_cells, "all", dtype=object)
    )
    sample_condition = (
        pd.DataFrame({"sample": samples, "condition": conditions})
        .groupby("sample", sort=True)["condition"]
        .agg(lambda s: s.value_counts().index[0])
        .reset_index()
    )

    rows = []
    groups_by_protein = {}
    for protein in proteins:
        groups = {}
        for condition in sorted(set(conditions.tolist())):
            values = frame.loc[conditions == condition, protein].to_numpy()
            groups[condition] = values
            q1, median, q3 = np.quantile(values, [0.25, 0.5, 0.75])
            rows.append(
                {
                    "protein": protein,
                    "condition": condition,
                    "n_cells": int(values.size),
                    "mean": float(values.mean()),
                    "q1": float(q1),
                    "median": float(median),
                    "q3": float(q3),
                }
            )
        groups_by_protein[protein] = groups
    distributions = pd.DataFrame(rows, columns=["protein", "condition", "n_cells", "mean", "q1", "median", "q3"])

    artifacts: list[str] = []
    stem = artifact_stem(ctx, "Visualization", "heatmap")
    if stem is not None:
        artifacts += plots.plot_heatmap(heatmap, stem, title="Mean expression per sample", png=ctx.attach_images)
        for protein, groups in groups_by_protein.items():
            artifacts += plots.plot_distributions(
                groups, protein, artifact_stem(ctx, "Visualization", protein), png=ctx.attach_images
            )

    tables = {
        "heatmap": heatmap.reset_index(),
        "samples": sample_condition,
        "distributions": distributions,
    }
    return build_result(
        ctx,
        "Visualization",
        tables,
        artifacts=artifacts,
        dataset_delta={},
        max_rows=max(len(distributions), len(heatmap)),
    )


def _contrasts(params: dict) -> list[tuple[str, str]]:
    return [tuple(pair) for pair in params["contrasts"]]


def differential_abundance(ctx: WorkflowContext, params: dict) -> WorkflowResult:
    require_cell_types(ctx.dataset)
    require_samples(ctx.dataset)
    rows = diff_abundance(ctx.dataset, FLOWSOM_TYPES, params["field"], _contrasts(params))
    tables = {"differential_abundance": rows_to_frame(rows, DA_COLUMNS)}
    return build_result(ctx, "Differential Abundance (Cell Types)", tables)


def stratified_differential_expression(ctx: WorkflowContext, params: dict) -> WorkflowResult:
    require_cell_types(ctx.dataset)
    require_samples(ctx.dataset)
    dataset: SingleCellDataset = ctx.dataset
    known = sorted(set(dataset.cell_types[FLOWSOM_TYPES].values()))
    focus = list(params.get("focus_cell_types") or [])
    if not focus:
        focus = pick_names(
            ctx,
            "select_focus_cell_types",
            {"objective": ctx.objective, "cell_types": ", ".join(known)},
            known,
        )
    rows = diff_expression(dataset, FLOWSOM_TYPES, params["field"], _contrasts(params), focus_cell_types=focus)
    ctx.state["de_rows"] = rows
    tables = {"differential_expression": rows_to_frame(rows, DE_COLUMNS)}
    return build_result(
        ctx, "Stratified Differential Expression", tables, dataset_delta={}
    )


def differential_expression(ctx: WorkflowContext, params: dict) -> WorkflowResult:
    require_samples(ctx.dataset)
    rows = diff_expression(ctx.dataset, None, params["field"], _contrasts(params))
    ctx.state["de_rows"] = rows
    tables = {"differential_expression": rows_to_frame(rows, DE_COLUMNS)}
    return build_result(ctx, "Differential Expression", tables)
