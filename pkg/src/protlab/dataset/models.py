"""
Dataset domain types.

All values are immutable after construction: numpy arrays are flagged
read-only and every "mutation" (adding a clustering, adding a metadata
field, subsetting) returns a new object.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from types import MappingProxyType
from typing import Literal, Mapping, Optional, Union

import numpy as np
import pandas as pd

from ..core.errors import ProtlabError


FieldType = Literal["categorical", "numeric"]

DEFAULT_SAMPLE_FIELD = "sample_id"


# =============================================================================
# Custom Exceptions
# =============================================================================


class DatasetError(ProtlabError):
    """Base exception for dataset errors."""

    pass


class MissingFile(DatasetError):
    """Raised when an input file does not exist."""

    pass


class EmptyMatrix(DatasetError):
    """Raised when the expression matrix has no observations or no proteins."""

    pass


class DimensionMismatch(DatasetError):
    """Raised when metadata keys do not exactly cover the matrix rows."""

    pass


class NonNumericCell(DatasetError):
    """Raised when an expression value cannot be parsed as a finite number."""

    def __init__(self, row_id: str, col_id: str, value: str):
        self.row_id = row_id
        self.col_id = col_id
        self.value = value
        super().__init__(f"Non-numeric value {value!r} at row {row_id!r}, column {col_id!r}")


class DuplicateIdentifier(DatasetError):
    """Raised when observation or protein identifiers repeat."""

    pass


class AllColumnsDropped(DatasetError):
    """Raised when every protein exceeds the missing-value threshold."""

    pass


class InsufficientNeighbors(DatasetError):
    """Raised when kNN imputation cannot find k donors for a missing value."""

    def __init__(self, sample: str, protein: str, available: int, k: int):
        self.sample = sample
        self.protein = protein
        self.available = available
        self.k = k
        super().__init__(
            f"Only {available} donor samples (need {k}) to impute {protein!r} for sample {sample!r}"
        )


class UnknownClustering(DatasetError):
    """Raised when a named clustering does not exist."""

    pass


class UnknownCellType(DatasetError):
    """Raised when a cell type is absent from a clustering's cell-type map."""

    pass


class UnknownField(DatasetError):
    """Raised when a metadata field does not exist."""

    pass


class InvalidDataset(DatasetError):
    """Raised when a constructed value violates a dataset invariant."""

    pass


# =============================================================================
# Helpers
# =============================================================================


def _frozen_array(values: np.ndarray, dtype=None) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


def _check_unique(ids: tuple[str, ...], what: str) -> None:
    if len(set(ids)) != len(ids):
        seen: set[str] = set()
        dupes = sorted({i for i in ids if i in seen or seen.add(i)})
        raise DuplicateIdentifier(f"Duplicate {what}: {', '.join(dupes[:5])}")


# =============================================================================
# Data Classes
# =============================================================================


@dataclass(frozen=True)
class ExpressionMatrix:
    """Observations x proteins matrix of finite abundance values."""

    values: np.ndarray
    row_ids: tuple[str, ...]
    col_ids: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", _frozen_array(self.values, dtype=float))
        object.__setattr__(self, "row_ids", tuple(str(r) for r in self.row_ids))
        object.__setattr__(self, "col_ids", tuple(str(c) for c in self.col_ids))

        if self.values.ndim != 2:
            raise InvalidDataset("Expression values must be a 2-D array")
        n_rows, n_cols = self.values.shape
        if n_rows == 0 or n_cols == 0:
            raise EmptyMatrix(f"Expression matrix is empty ({n_rows} x {n_cols})")
        if len(self.row_ids) != n_rows or len(self.col_ids) != n_cols:
            raise InvalidDataset(
                f"Identifier counts ({len(self.row_ids)}, {len(self.col_ids)}) "
                f"do not match matrix shape {self.values.shape}"
            )
        _check_unique(self.row_ids, "observation ids")
        _check_unique(self.col_ids, "protein ids")
        if not np.isfinite(self.values).all():
            raise InvalidDataset("Expression matrix contains NaN or Inf")

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def column(self, protein: str) -> np.ndarray:
        """Get one protein's values across all observations."""
        try:
            return self.values[:, self.col_ids.index(protein)]
        except ValueError:
            raise KeyError(protein)

    def take_rows(self, mask: np.ndarray) -> ExpressionMatrix:
        """Return a new matrix restricted to rows where mask is True."""
        mask = np.asarray(mask, dtype=bool)
        rows = tuple(r for r, keep in zip(self.row_ids, mask) if keep)
        return ExpressionMatrix(self.values[mask], rows, self.col_ids)

    def to_frame(self) -> pd.DataFrame:
        """Copy into a DataFrame indexed by observation id."""
        return pd.DataFrame(self.values.copy(), index=list(self.row_ids), columns=list(self.col_ids))


@dataclass(frozen=True)
class MetadataTable:
    """Per-observation metadata keyed on observation id, each column typed."""

    frame: pd.DataFrame
    types: Mapping[str, FieldType]

    def __post_init__(self) -> None:
        frame = self.frame.copy()
        frame.index = frame.index.astype(str)
        object.__setattr__(self, "frame", frame)
        object.__setattr__(self, "types", MappingProxyType(dict(self.types)))

        if not frame.index.is_unique:
            raise DuplicateIdentifier("Metadata key column contains duplicates")
        if set(frame.columns) != set(self.types):
            raise InvalidDataset("Every metadata column needs exactly one declared type")
        for name, kind in self.types.items():
            if kind not in ("categorical", "numeric"):
                raise InvalidDataset(f"Field {name!r} has unknown type {kind!r}")

    @property
    def keys(self) -> tuple[str, ...]:
        return tuple(self.frame.index)

    @property
    def fields(self) -> tuple[str, ...]:
        return tuple(self.frame.columns)

    def column(self, name: str) -> pd.Series:
        """Get a copy of one field."""
        if name not in self.types:
            raise UnknownField(f"Unknown metadata field: {name!r}")
        return self.frame[name].copy()

    def levels(self, name: str) -> list[str]:
        """Sorted distinct non-missing values of a categorical field."""
        if name not in self.types:
            raise UnknownField(f"Unknown metadata field: {name!r}")
        if self.types[name] != "categorical":
            raise UnknownField(f"Field {name!r} is numeric, not categorical")
        return sorted(str(v) for v in self.frame[name].dropna().unique())

    def take_rows(self, mask: np.ndarray) -> MetadataTable:
        """Return a new table restricted to rows where mask is True."""
        return MetadataTable(self.frame.loc[np.asarray(mask, dtype=bool)], self.types)

    def with_field(self, name: str, values, kind: FieldType) -> MetadataTable:
        """Return a new table with a field added (or replaced)."""
        frame = self.frame.copy()
        frame[name] = list(values)
        types = dict(self.types)
        types[name] = kind
        return MetadataTable(frame, types)


def _check_cover(matrix: ExpressionMatrix, meta: MetadataTable) -> None:
    if set(meta.keys) != set(matrix.row_ids) or len(meta.keys) != len(matrix.row_ids):
        missing = sorted(set(matrix.row_ids) - set(meta.keys))
        extra = sorted(set(meta.keys) - set(matrix.row_ids))
        raise DimensionMismatch(
            f"Metadata keys do not match matrix rows "
            f"(missing from metadata: {missing[:5]}, not in matrix: {extra[:5]})"
        )


def _contiguous(labels: np.ndarray) -> bool:
    if labels.size == 0:
        return True
    if labels.min() < 0:
        return False
    return set(np.unique(labels).tolist()) == set(range(int(labels.max()) + 1))


@dataclass(frozen=True)
class SingleCellDataset:
    """Cells x proteins matrix with metadata, clusterings and cell-type maps."""

    matrix: ExpressionMatrix
    meta: MetadataTable
    clusterings: Mapping[str, np.ndarray] = field(default_factory=dict)
    cell_types: Mapping[str, Mapping[int, str]] = field(default_factory=dict)
    sample_field: Optional[str] = None

    kind = "single_cell"

    def __post_init__(self) -> None:
        meta = self.meta
        if meta.keys != self.matrix.row_ids:
            _check_cover(self.matrix, meta)
            meta = MetadataTable(meta.frame.loc[list(self.matrix.row_ids)], meta.types)
            object.__setattr__(self, "meta", meta)

        if self.sample_field is None:
            if DEFAULT_SAMPLE_FIELD in meta.types:
                object.__setattr__(self, "sample_field", DEFAULT_SAMPLE_FIELD)
        elif self.sample_field not in meta.types:
            raise UnknownField(f"Metadata has no sample field {self.sample_field!r}")

        clusterings = {}
        for name, labels in self.clusterings.items():
            arr = _frozen_array(labels, dtype=int)
            if arr.shape != (self.n_cells,):
                raise InvalidDataset(
                    f"Clustering {name!r} has {arr.size} labels for {self.n_cells} cells"
                )
            if not _contiguous(arr):
                raise InvalidDataset(f"Clustering {name!r} labels are not contiguous from 0")
            clusterings[name] = arr
        object.__setattr__(self, "clusterings", MappingProxyType(clusterings))

        cell_types = {}
        for name, mapping in self.cell_types.items():
            if name not in clusterings:
                raise UnknownClustering(f"Cell-type map {name!r} has no matching clustering")
            labels = set(np.unique(clusterings[name]).tolist())
            mapping = {int(k): str(v) for k, v in mapping.items()}
            if set(mapping) != labels:
                raise InvalidDataset(
                    f"Cell-type map {name!r} does not cover exactly the labels of its clustering"
                )
            cell_types[name] = MappingProxyType(mapping)
        object.__setattr__(self, "cell_types", MappingProxyType(cell_types))

    @property
    def n_cells(self) -> int:
        return self.matrix.shape[0]

    @property
    def proteins(self) -> tuple[str, ...]:
        return self.matrix.col_ids

    def labels(self, clustering: str) -> np.ndarray:
        if clustering not in self.clusterings:
            raise UnknownClustering(f"Unknown clustering: {clustering!r}")
        return self.clusterings[clustering]

    def cell_type_labels(self, clustering: str) -> np.ndarray:
        """Per-cell cell-type names under a clustering."""
        if clustering not in self.cell_types:
            raise UnknownClustering(f"Clustering {clustering!r} has no cell-type map")
        mapping = self.cell_types[clustering]
        return np.array([mapping[int(label)] for label in self.labels(clustering)], dtype=object)

    def samples(self) -> np.ndarray:
        """Per-cell sample identifiers; UnknownField when the metadata names no sample."""
        if self.sample_field is None:
            raise UnknownField("Dataset has no sample field; per-sample analyses need one")
        return self.meta.column(self.sample_field).astype(str).to_numpy()

    def with_clustering(
        self, name: str, labels: np.ndarray, cell_types: Optional[Mapping[int, str]] = None
    ) -> SingleCellDataset:
        """Return a new dataset with a clustering (and optional cell-type map) set."""
        clusterings = dict(self.clusterings)
        clusterings[name] = np.asarray(labels, dtype=int)
        maps = dict(self.cell_types)
        if cell_types is not None:
            maps[name] = dict(cell_types)
        else:
            maps.pop(name, None)
        return replace(self, clusterings=clusterings, cell_types=maps)

    def with_metadata_field(self, name: str, values, kind: FieldType) -> SingleCellDataset:
        return replace(self, meta=self.meta.with_field(name, values, kind))


@dataclass(frozen=True)
class ClinicalCohort:
    """Samples x proteins matrix (filtered and imputed) with a typed clinical table."""

    matrix: ExpressionMatrix
    clinical: MetadataTable
    survival_time_field: Optional[str] = None
    event_field: Optional[str] = None
    dropped_proteins: tuple[str, ...] = ()
    imputed_count: int = 0

    kind = "clinical"

    def __post_init__(self) -> None:
        clinical = self.clinical
        if clinical.keys != self.matrix.row_ids:
            _check_cover(self.matrix, clinical)
            clinical = MetadataTable(clinical.frame.loc[list(self.matrix.row_ids)], clinical.types)
            object.__setattr__(self, "clinical", clinical)
        object.__setattr__(self, "dropped_proteins", tuple(self.dropped_proteins))

        if self.event_field is not None:
            events = pd.to_numeric(clinical.column(self.event_field).dropna(), errors="coerce")
            if events.isna().any() or not set(events.tolist()) <= {0, 1}:
                raise InvalidDataset(f"Event field {self.event_field!r} must hold only 0/1")
        if self.survival_time_field is not None:
            times = pd.to_numeric(clinical.column(self.survival_time_field).dropna(), errors="coerce")
            if times.isna().any():
                raise InvalidDataset(f"Survival time field {self.survival_time_field!r} has non-numeric values")
            if (times < 0).any():
                raise InvalidDataset(f"Survival time field {self.survival_time_field!r} has negative values")

    @property
    def meta(self) -> MetadataTable:
        return self.clinical

    @property
    def n_samples(self) -> int:
        return self.matrix.shape[0]

    @property
    def proteins(self) -> tuple[str, ...]:
        return self.matrix.col_ids

    def with_metadata_field(self, name: str, values, kind: FieldType) -> ClinicalCohort:
        return replace(self, clinical=self.clinical.with_field(name, values, kind))


Dataset = Union[SingleCellDataset, ClinicalCohort]


@dataclass(frozen=True)
class FieldInfo:
    """One metadata column as described to the planner."""

    name: str
    type: FieldType
    examples: tuple[str, ...]
    n_distinct: int
    truncated: bool


@dataclass(frozen=True)
class DataDescription:
    """Structured dataset summary plus the LLM-written narrative."""

    kind: str
    n_observations: int
    n_proteins: int
    field_catalog: tuple[FieldInfo, ...]
    cell_type_maps: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    proteins: tuple[str, ...] = ()
    narrative: str = ""

    @property
    def counts(self) -> dict[str, int]:
        return {"n_observations": self.n_observations, "n_proteins": self.n_proteins}

    def field(self, name: str) -> Optional[FieldInfo]:
        for info in self.field_catalog:
            if info.name == name:
                return info
        return None

    def to_text(self) -> str:
        """Deterministic plain-text rendering of the structured half."""
        unit = "cells" if self.kind == "single_cell" else "samples"
        lines = [
            f"Data type: {'single-cell proteomics' if self.kind == 'single_cell' else 'clinical cohort proteomics'}",
            f"Number of {unit}: {self.n_observations}",
            f"Number of proteins: {self.n_proteins}",
        ]
        if self.proteins:
            lines.append(f"Proteins: {', '.join(self.proteins)}")
        if self.field_catalog:
            lines.append("Metadata fields:")
            for info in self.field_catalog:
                more = ", ..." if info.truncated else ""
                lines.append(
                    f"- {info.name} ({info.type}, {info.n_distinct} distinct): "
                    f"{', '.join(info.examples)}{more}"
                )
        else:
            lines.append("Metadata fields: none")
        for name, types in self.cell_type_maps.items():
            lines.append(f"Cell types under clustering {name}: {', '.join(types)}")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "counts": self.counts,
            "field_catalog": [
                {
                    "name": f.name,
                    "type": f.type,
                    "examples": list(f.examples),
                    "n_distinct": f.n_distinct,
                    "truncated": f.truncated,
                }
                for f in self.field_catalog
            ],
            "cell_type_maps": {k: list(v) for k, v in self.cell_type_maps.items()},
            "narrative": self.narrative,
        }
