"""
Differential abundance and differential expression.

Both run Welch two-sample t-tests with samples as the unit of replication:
abundance on logit cell-type proportions, expression on per-sample medians.
P-values are BH-adjusted within each contrast.
"""

from __future__ import annotations

import logging
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from scipy import stats

from ..dataset.models import (
    MetadataTable,
    SingleCellDataset,
    UnknownCellType,
    UnknownClustering,
    UnknownField,
)
from .errors import EmptyGroup, FocusWithoutStratification, TooFewSamples
from .multiple import bh_adjust
from .tables import DAResultRow, DEResultRow

logger = logging.getLogger(__name__)


REST = "REST"
PSEUDO_COUNT = 0.5

Contrast = tuple[str, str]


# =============================================================================
# Helpers
# =============================================================================


def contrast_label(contrast: Contrast) -> str:
    return f"{contrast[0]} vs {contrast[1]}"


def welch(a: np.ndarray, b: np.ndarray) -> float:
    """
    Welch t-test p-value; zero-variance degenerate cases resolved to 1 (no
    difference) or 0 (separated constants).
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.ptp(a) == 0 and np.ptp(b) == 0:
        return 1.0 if a[0] == b[0] else 0.0
    p = float(stats.ttest_ind(a, b, equal_var=False).pvalue)
    if np.isnan(p):
        return 1.0
    return float(np.clip(p, 0.0, 1.0))


def split_units(levels: pd.Series, contrast: Contrast) -> tuple[list[str], list[str]]:
    """
    Resolve a contrast to the unit ids on each side.

    levels: unit id -> categorical level. REST on one side means every unit
    whose level differs from the other side.
    """
    side_a, side_b = contrast
    if side_a == REST and side_b == REST:
        raise EmptyGroup("A contrast cannot have REST on both sides")
    observed = set(levels.dropna().astype(str))
    for side in contrast:
        if side != REST and side not in observed:
            raise EmptyGroup(f"Level {side!r} selects no samples")

    as_str = levels.astype(str).where(levels.notna(), None)
    if side_a == REST:
        units_b = as_str.index[as_str == side_b].tolist()
        units_a = as_str.index[as_str.notna() & (as_str != side_b)].tolist()
    else:
        units_a = as_str.index[as_str == side_a].tolist()
        if side_b == REST:
            units_b = as_str.index[as_str.notna() & (as_str != side_a)].tolist()
        else:
            units_b = as_str.index[as_str == side_b].tolist()

    for side, units in ((side_a, units_a), (side_b, units_b)):
        if not units:
            raise EmptyGroup(f"Contrast side {side!r} selects no samples")
        if len(units) < 2:
            raise TooFewSamples(f"Contrast side {side!r} has {len(units)} sample (need 2)")
    return units_a, units_b


def _categorical_field(meta: MetadataTable, field: str) -> None:
    if field not in meta.types:
        raise UnknownField(f"Unknown metadata field: {field!r}")
    if meta.types[field] != "categorical":
        raise UnknownField(f"Field {field!r} is numeric; contrasts need a categorical field")


def sample_levels(dataset: SingleCellDataset, field: str) -> pd.Series:
    """Sample id -> level of field (most frequent value within the sample)."""
    _categorical_field(dataset.meta, field)
    frame = pd.DataFrame(
        {"sample": dataset.samples(), "level": dataset.meta.column(field).to_numpy()}
    ).dropna()
    levels = frame.groupby("sample", sort=True)["level"].agg(lambda s: s.value_counts().index[0])
    return levels.astype(str)


# =============================================================================
# Differential abundance
# =============================================================================


def cell_type_proportions(dataset: SingleCellDataset, clustering: str) -> pd.DataFrame:
    """Samples x cell types proportions with the 0.5 pseudo-count applied to every count."""
    if clustering not in dataset.cell_types:
        raise UnknownClustering(f"Clustering {clustering!r} has no cell-type map")
    types = dataset.cell_type_labels(clustering)
    frame = pd.DataFrame({"sample": dataset.samples(), "cell_type": types})
    counts = pd.crosstab(frame["sample"], frame["cell_type"])
    all_types = sorted(set(dataset.cell_types[clustering].values()))
    counts = counts.reindex(columns=all_types, fill_value=0).sort_index()
    counts = counts + PSEUDO_COUNT
    return counts.div(counts.sum(axis=1), axis=0)


def diff_abundance(
    dataset: SingleCellDataset,
    clustering: str,
    field: str,
    contrasts: Sequence[Contrast],
) -> list[DAResultRow]:
    """
    Test each cell type's proportion between contrast groups.

    Returns:
        Rows for every (contrast, cell type), BH-adjusted within each contrast.
    """
    levels = sample_levels(dataset, field)
    props = cell_type_proportions(dataset, clustering)
    logits = np.log(props / (1.0 - props))

    rows: list[DAResultRow] = []
    for contrast in contrasts:
        units_a, units_b = split_units(levels, tuple(contrast))
        label = contrast_label(contrast)
        raw = []
        for cell_type in props.columns:
            mean_a = float(props.loc[units_a, cell_type].mean())
            mean_b = float(props.loc[units_b, cell_type].mean())
            log_fc = float(np.log2(mean_a / mean_b))
            p = welch(logits.loc[units_a, cell_type].to_numpy(), logits.loc[units_b, cell_type].to_numpy())
            raw.append((str(cell_type), log_fc, p))
        adjusted = bh_adjust([r[2] for r in raw])
        rows.extend(
            DAResultRow(label, ct, fc, p, float(q)) for (ct, fc, p), q in zip(raw, adjusted)
        )
        logger.debug(f"[Statkit] DA {label}: {len(raw)} cell types tested")
    return rows


# =============================================================================
# Differential expression
# =============================================================================


def sample_medians(dataset: SingleCellDataset, clustering: Optional[str]) -> dict[Optional[str], pd.DataFrame]:
    """Per cluster (None when unstratified): samples x proteins median expression."""
    frame = dataset.matrix.to_frame()
    frame["__sample"] = dataset.samples()
    if clustering is None:
        frame["__cluster"] = "all"
    else:
        frame["__cluster"] = dataset.cell_type_labels(clustering)

    result: dict[Optional[str], pd.DataFrame] = {}
    for cluster, part in frame.groupby("__cluster", sort=True):
        medians = part.drop(columns="__cluster").groupby("__sample", sort=True).median()
        result[None if clustering is None else str(cluster)] = medians
    return result


def diff_expression(
    dataset: SingleCellDataset,
    clustering: Optional[str],
    field: str,
    contrasts: Sequence[Contrast],
    focus_cell_types: Optional[Sequence[str]] = None,
) -> list[DEResultRow]:
    """
    Test each protein between contrast groups on per-sample medians.

    With a clustering the test is stratified by cell type; without one all
    cells form a single cluster. logFC is the difference of group means of
    sample medians (inputs are already log-scale).
    """
    if focus_cell_types and clustering is None:
        raise FocusWithoutStratification("Focus cell types require a stratified analysis")
    if clustering is not None and clustering not in dataset.cell_types:
        raise UnknownClustering(f"Clustering {clustering!r} has no cell-type map")

    levels = sample_levels(dataset, field)
    medians = sample_medians(dataset, clustering)
    if focus_cell_types:
        focus = set(focus_cell_types)
        known = set(dataset.cell_types[clustering].values())
        unknown = focus - known
        if unknown:
            raise UnknownCellType(f"Focus cell types not in clustering: {sorted(unknown)}")
        medians = {k: v for k, v in medians.items() if k in focus}

    rows: list[DEResultRow] = []
    for contrast in contrasts:
        units_a, units_b = split_units(levels, tuple(contrast))
        label = contrast_label(contrast)
        raw = []
        for cluster, table in medians.items():
            in_a = [u for u in units_a if u in table.index]
            in_b = [u for u in units_b if u in table.index]
            if len(in_a) < 2 or len(in_b) < 2:
                logger.info(
                    f"[Statkit] DE {label}: skipping {cluster!r} ({len(in_a)} vs {len(in_b)} samples with cells)"
                )
                continue
            for protein in dataset.proteins:
                a = table.loc[in_a, protein].to_numpy()
                b = table.loc[in_b, protein].to_numpy()
                log_fc = float(a.mean() - b.mean())
                raw.append((cluster, protein, log_fc, welch(a, b)))
        adjusted = bh_adjust([r[3] for r in raw])
        rows.extend(
            DEResultRow(label, cluster, protein, fc, p, float(q))
            for (cluster, protein, fc, p), q in zip(raw, adjusted)
        )
    return rows


def bulk_diff_expression(
    matrix,
    meta: MetadataTable,
    field: str,
    contrasts: Sequence[Contrast],
) -> list[DEResultRow]:
    """
    Per-protein Welch tests between sample groups of a bulk cohort.

    Samples are the matrix rows; logFC is the difference of group means.
    """
    _categorical_field(meta, field)
    levels = meta.column(field)
    frame = matrix.to_frame()

    rows: list[DEResultRow] = []
    for contrast in contrasts:
        units_a, units_b = split_units(levels, tuple(contrast))
        label = contrast_label(contrast)
        raw = []
        for protein in matrix.col_ids:
            a = frame.loc[units_a, protein].to_numpy()
            b = frame.loc[units_b, protein].to_numpy()
            raw.append((protein, float(a.mean() - b.mean()), welch(a, b)))
        adjusted = bh_adjust([r[2] for r in raw])
        rows.extend(
            DEResultRow(label, None, protein, fc, p, float(q))
            for (protein, fc, p), q in zip(raw, adjusted)
        )
    return rows
