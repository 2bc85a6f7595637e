"""
Operations over loaded datasets: the structured summary handed to the
planner and cell-type subsetting.
"""

from __future__ import annotations

import logging

import numpy as np

from .models import (
    DataDescription,
    Dataset,
    FieldInfo,
    MetadataTable,
    SingleCellDataset,
    UnknownCellType,
    UnknownClustering,
)

logger = logging.getLogger(__name__)


MAX_EXAMPLES = 8


def _format_value(value) -> str:
    if isinstance(value, float):
        return f"{value:g}"
    return str(value)


def _describe_field(meta: MetadataTable, name: str) -> FieldInfo:
    series = meta.frame[name].dropna()
    kind = meta.types[name]
    if kind == "numeric":
        distinct = sorted(set(float(v) for v in series))
    else:
        distinct = sorted(set(str(v) for v in series))
    examples = tuple(_format_value(v) for v in distinct[:MAX_EXAMPLES])
    return FieldInfo(
        name=name,
        type=kind,
        examples=examples,
        n_distinct=len(distinct),
        truncated=len(distinct) > MAX_EXAMPLES,
    )


def structured_summary(dataset: Dataset) -> DataDescription:
    """
    Build the deterministic half of the data description.

    Every metadata column appears once in the field catalog with at most
    eight sorted example values; the narrative is left empty.
    """
    meta = dataset.meta
    catalog = tuple(_describe_field(meta, name) for name in meta.fields)

    cell_type_maps: dict[str, tuple[str, ...]] = {}
    if isinstance(dataset, SingleCellDataset):
        for name, mapping in dataset.cell_types.items():
            cell_type_maps[name] = tuple(sorted(set(mapping.values())))

    n_obs, n_prot = dataset.matrix.shape
    return DataDescription(
        kind=dataset.kind,
        n_observations=n_obs,
        n_proteins=n_prot,
        field_catalog=catalog,
        cell_type_maps=cell_type_maps,
        proteins=dataset.matrix.col_ids,
    )


def _relabel(labels: np.ndarray, mapping=None):
    """Make labels contiguous from 0, carrying the cell-type map along."""
    uniques, inverse = np.unique(labels, return_inverse=True)
    new_map = None
    if mapping is not None:
        new_map = {new: mapping[int(old)] for new, old in enumerate(uniques)}
    return inverse.astype(int), new_map


def subset_by_cell_type(dataset: SingleCellDataset, clustering: str, cell_type: str) -> SingleCellDataset:
    """
    Keep only the cells whose cluster maps to cell_type.

    Other clusterings are carried over and relabelled to stay contiguous.
    The parent dataset is not modified.
    """
    if clustering not in dataset.clusterings:
        raise UnknownClustering(f"Unknown clustering: {clustering!r}")
    if clustering not in dataset.cell_types:
        raise UnknownClustering(f"Clustering {clustering!r} has no cell-type map")
    mapping = dataset.cell_types[clustering]
    if cell_type not in set(mapping.values()):
        raise UnknownCellType(
            f"Cell type {cell_type!r} not in clustering {clustering!r} "
            f"(known: {sorted(set(mapping.values()))})"
        )

    mask = dataset.cell_type_labels(clustering) == cell_type
    clusterings = {}
    cell_types = {}
    for name, labels in dataset.clusterings.items():
        sub_labels, sub_map = _relabel(labels[mask], dataset.cell_types.get(name))
        clusterings[name] = sub_labels
        if sub_map is not None:
            cell_types[name] = sub_map

    logger.debug(f"[Dataset] Subset {cell_type!r}: {int(mask.sum())}/{dataset.n_cells} cells")
    return SingleCellDataset(
        matrix=dataset.matrix.take_rows(mask),
        meta=dataset.meta.take_rows(mask),
        clusterings=clusterings,
        cell_types=cell_types,
        sample_field=dataset.sample_field,
    )

