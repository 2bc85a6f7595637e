"""
Clinical cohort workflows.

Each one binds a statkit operation to the cohort: parameters in, result
tables out, then an LLM reading of the table digest.
"""

from __future__ import annotations

import logging
import math
from dataclasses import replace
from typing import Mapping, Optional, Sequence

import numpy as np
import pandas as pd

from ..dataset.models import ClinicalCohort
from ..statkit import (
    REST,
    bh_adjust,
    bulk_diff_expression,
    cox_univariate,
    gsea,
    logrank_threshold_sweep,
    nmf_consensus,
    ora,
    pearson,
    rows_to_frame,
)
from ..statkit.errors import StatkitError
from ..statkit.tables import (
    CORRELATION_COLUMNS,
    DE_COLUMNS,
    ENRICHMENT_COLUMNS,
    SURVIVAL_COLUMNS,
    CorrelationRow,
    DEResultRow,
    SurvivalResult,
)
from . import plots
from .common import artifact_stem, build_result
from .models import DependencyMissing, WorkflowContext, WorkflowError, WorkflowResult

logger = logging.getLogger(__name__)

SUBTYPE_FIELD = "nmf_subtype"
DEFAULT_SURVIVAL_MOLECULES = 10
ENRICHMENT_LOGFC = 1.0
ENRICHMENT_PADJ = 0.05
FALLBACK_FRACTION = 0.10
GSEA_PERMUTATIONS = 1000


# =============================================================================
# Table builders shared with external plugins
# =============================================================================


def correlation_rows(
    xs: Mapping[str, np.ndarray],
    ys: Mapping[str, np.ndarray],
) -> list[CorrelationRow]:
    """
    Pearson r for every (x, y) pair on their jointly observed entries,
    BH-adjusted across pairs. Untestable pairs are skipped.
    """
    raw = []
    for x_name, x_values in xs.items():
        for y_name, y_values in ys.items():
            x_arr = np.asarray(x_values, dtype=float)
            y_arr = np.asarray(y_values, dtype=float)
            observed = ~(np.isnan(x_arr) | np.isnan(y_arr))
            try:
                r, p = pearson(x_arr[observed], y_arr[observed])
            except StatkitError as e:
                logger.info(f"[Workflow] Correlation {x_name} ~ {y_name} skipped: {e}")
                continue
            raw.append((x_name, y_name, r, p, int(observed.sum())))
    adjusted = bh_adjust([row[3] for row in raw])
    return [CorrelationRow(x, y, r, p, float(q), n) for (x, y, r, p, n), q in zip(raw, adjusted)]


def survival_rows(
    expression: Mapping[str, np.ndarray],
    time: np.ndarray,
    event: np.ndarray,
    method: str,
) -> tuple[list[SurvivalResult], list[tuple[str, str]]]:
    """
    One survival result per molecule, p-values BH-adjusted across molecules.

    Returns:
        (results, [(molecule, reason)] for molecules that could not be tested)
    """
    time = np.asarray(time, dtype=float)
    event = np.asarray(event, dtype=float)
    tested: list[SurvivalResult] = []
    skipped: list[tuple[str, str]] = []
    for molecule, values in expression.items():
        values = np.asarray(values, dtype=float)
        observed = ~(np.isnan(values) | np.isnan(time) | np.isnan(event))
        args = (values[observed], time[observed], event[observed].astype(int), molecule)
        try:
            result = logrank_threshold_sweep(*args) if method == "discrete" else cox_univariate(*args)
        except StatkitError as e:
            logger.info(f"[Workflow] Survival for {molecule} skipped: {e}")
            skipped.append((molecule, f"{type(e).__name__}: {e}"))
            continue
        tested.append(result)
    adjusted = bh_adjust([r.p for r in tested])
    return [replace(r, p_adj=float(q)) for r, q in zip(tested, adjusted)], skipped


def _skipped_table(skipped: Sequence[tuple[str, str]]) -> pd.DataFrame:
    return pd.DataFrame(list(skipped), columns=["molecule", "reason"])


# =============================================================================
# Helpers
# =============================================================================


def _contrasts(params: dict) -> list[tuple[str, str]]:
    return [tuple(pair) for pair in params["contrasts"]]


def _default_contrast(cohort: ClinicalCohort) -> tuple[str, list[tuple[str, str]]]:
    """First categorical field with two or more levels, first level vs REST."""
    candidates = [n for n, k in cohort.clinical.types.items() if k == "categorical"]
    if "condition" in candidates:
        candidates.remove("condition")
        candidates.insert(0, "condition")
    for name in candidates:
        levels = cohort.clinical.levels(name)
        if len(levels) >= 2:
            return name, [(levels[0], REST)]
    raise DependencyMissing("No categorical clinical field to contrast for differential expression")


def _numeric_column(cohort: ClinicalCohort, name: str) -> np.ndarray:
    return pd.to_numeric(cohort.clinical.column(name), errors="coerce").to_numpy(dtype=float)


def _protein_columns(cohort: ClinicalCohort, proteins: Sequence[str]) -> dict[str, np.ndarray]:
    return {p: cohort.matrix.column(p) for p in proteins}


def default_survival_molecules(cohort: ClinicalCohort, de_rows: Optional[Sequence[DEResultRow]]) -> list[str]:
    """Top proteins by differential-expression p, else all (when few) or the most variable."""
    if de_rows:
        ordered = sorted(de_rows, key=lambda r: (r.p, r.protein))
        return list(dict.fromkeys(r.protein for r in ordered))[:DEFAULT_SURVIVAL_MOLECULES]
    proteins = list(cohort.proteins)
    if len(proteins) <= DEFAULT_SURVIVAL_MOLECULES:
        return proteins
    variances = cohort.matrix.values.var(axis=0)
    order = sorted(range(len(proteins)), key=lambda j: (-variances[j], proteins[j]))
    return [proteins[j] for j in order[:DEFAULT_SURVIVAL_MOLECULES]]


# =============================================================================
# Workflow bodies
# =============================================================================


def differential_expression_analysis(ctx: WorkflowContext, params: dict) -> WorkflowResult:
    cohort: ClinicalCohort = ctx.dataset
    rows = bulk_diff_expression(cohort.matrix, cohort.clinical, params["field"], _contrasts(params))
    ctx.state["de_rows"] = rows
    tables = {"differential_expression": rows_to_frame(rows, DE_COLUMNS)}
    return build_result(ctx, "Differential Expression Analysis", tables)


def consensus_clustering(ctx: WorkflowContext, params: dict) -> WorkflowResult:
    cohort: ClinicalCohort = ctx.dataset
    result = nmf_consensus(cohort.matrix, seed=ctx.seed)
    subtypes = [f"C{int(label) + 1}" for label in result.assignments]
    ctx.dataset = cohort.with_metadata_field(SUBTYPE_FIELD, subtypes, "categorical")

    assignments = pd.DataFrame({"sample": list(cohort.matrix.row_ids), SUBTYPE_FIELD: subtypes})
    sizes = assignments[SUBTYPE_FIELD].value_counts().sort_index()
    tables = {
        "metrics": result.metric_table,
        "assignments": assignments,
        "subtype_sizes": sizes.rename_axis(SUBTYPE_FIELD).reset_index(name="n_samples"),
    }
    delta = {"metadata_field": SUBTYPE_FIELD, "chosen_k": result.chosen_k}
    return build_result(ctx, "Consensus Clustering", tables, dataset_delta=delta, max_rows=len(result.metric_table))


def _direction_sets(rows: Sequence[DEResultRow]) -> dict[str, list[str]]:
    """Up- and down-regulated proteins; top 10% by p (same sign) when none pass the cutoffs."""
    sets = {}
    for direction, sign in (("up", 1.0), ("down", -1.0)):
        hits = [r.protein for r in rows if sign * r.logFC > ENRICHMENT_LOGFC and r.p_adj < ENRICHMENT_PADJ]
        if not hits:
            n = max(1, math.ceil(FALLBACK_FRACTION * len(rows)))
            top = sorted(rows, key=lambda r: (r.p, r.protein))[:n]
            hits = [r.protein for r in top if sign * r.logFC > 0]
        if hits:
            sets[direction] = sorted(set(hits))
    return sets


def enrichment_analysis(ctx: WorkflowContext, params: dict) -> WorkflowResult:
    cohort: ClinicalCohort = ctx.dataset
    if not ctx.gene_sets:
        raise DependencyMissing("No gene-set libraries are configured")

    de_rows: Optional[list[DEResultRow]] = ctx.state.get("de_rows")
    delta = {}
    if params.get("field") or not de_rows:
        if ctx.direct_tools and not params.get("field"):
            raise DependencyMissing("Enrichment needs differential expression results; run it first")
        if params.get("field"):
            field = params["field"]
            levels = cohort.clinical.levels(field)
            contrasts = _contrasts(params) if params.get("contrasts") else [(levels[0], REST)]
        else:
            field, contrasts = _default_contrast(cohort)
        logger.info(f"[Workflow] Running differential expression on {field!r} before enrichment")
        de_rows = bulk_diff_expression(cohort.matrix, cohort.clinical, field, contrasts)
        ctx.state["de_rows"] = de_rows
        delta["auto_differential_expression"] = field

    universe = list(cohort.proteins)
    frames = []
    skipped_total = 0
    for label in dict.fromkeys(r.contrast for r in de_rows):
        rows = [r for r in de_rows if r.contrast == label]
        ranked = [(r.protein, r.logFC) for r in rows]
        for library in ctx.gene_sets:
            results = [
                ora(members, universe, library.sets, source=library.source, direction=direction)
                for direction, members in _direction_sets(rows).items()
            ]
            results.append(
                gsea(ranked, library.sets, n_perm=GSEA_PERMUTATIONS, seed=ctx.seed, source=library.source, skip_invalid=True)
            )
            for result in results:
                skipped_total += len(result.skipped)
                frame = rows_to_frame(result.rows, ENRICHMENT_COLUMNS)
                frame.insert(0, "contrast", label)
                frames.append(frame)

    enrichment = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=["contrast"] + ENRICHMENT_COLUMNS)
    if skipped_total:
        logger.info(f"[Workflow] Enrichment skipped {skipped_total} untestable gene sets")
    return build_result(ctx, "Enrichment Analysis", {"enrichment": enrichment}, dataset_delta=delta)


def survival_analysis(ctx: WorkflowContext, params: dict) -> WorkflowResult:
    cohort: ClinicalCohort = ctx.dataset
    method = params["analysis_type"]
    time_field = params.get("survival_time_field") or cohort.survival_time_field
    event_field = params.get("event_field") or cohort.event_field
    if not time_field or not event_field:
        raise DependencyMissing("The cohort declares no survival time and event fields")

    molecules = list(params.get("molecules") or default_survival_molecules(cohort, ctx.state.get("de_rows")))
    time = _numeric_column(cohort, time_field)
    event = _numeric_column(cohort, event_field)
    results, skipped = survival_rows(_protein_columns(cohort, molecules), time, event, method)
    if not results:
        raise WorkflowError(f"No molecule could be tested for survival ({len(skipped)} skipped)")

    artifacts: list[str] = []
    best = min(results, key=lambda r: (r.p, r.molecule))
    stem = artifact_stem(ctx, "Survival Analysis", best.molecule)
    if stem is not None:
        values = cohort.matrix.column(best.molecule)
        threshold = best.threshold if best.threshold is not None else float(np.median(values))
        observed = ~(np.isnan(time) | np.isnan(event))
        artifacts += plots.plot_kaplan_meier(
            time[observed], event[observed], values[observed] > threshold, best.molecule, stem, png=ctx.attach_images
        )

    tables = {"survival": rows_to_frame(results, SURVIVAL_COLUMNS)}
    if skipped:
        tables["skipped"] = _skipped_table(skipped)
    return build_result(ctx, "Survival Analysis", tables, artifacts=artifacts)


def clinical_correlation(ctx: WorkflowContext, params: dict) -> WorkflowResult:
    cohort: ClinicalCohort = ctx.dataset
    feature = params["clinical_feature"]
    rows = correlation_rows(
        _protein_columns(cohort, params["molecules"]),
        {feature: _numeric_column(cohort, feature)},
    )
    return build_result(ctx, "Clinical Correlation", {"correlation": rows_to_frame(rows, CORRELATION_COLUMNS)})


def molecule_correlation(ctx: WorkflowContext, params: dict) -> WorkflowResult:
    cohort: ClinicalCohort = ctx.dataset
    rows = correlation_rows(
        _protein_columns(cohort, params["molecules_x"]),
        _protein_columns(cohort, params["molecules_y"]),
    )
    return build_result(ctx, "Molecule Correlation", {"correlation": rows_to_frame(rows, CORRELATION_COLUMNS)})


__all__ = [
    "clinical_correlation",
    "consensus_clustering",
    "correlation_rows",
    "default_survival_molecules",
    "differential_expression_analysis",
    "enrichment_analysis",
    "molecule_correlation",
    "survival_analysis",
    "survival_rows",
]
