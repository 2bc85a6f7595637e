"""
CSV ingestion and directory persistence for datasets.

Expression and metadata files are observations-as-rows CSVs whose first
column holds the observation id. Clinical cohorts go through the
missing-value filter and kNN imputation on load.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd
from sklearn.impute import KNNImputer

from .models import (
    AllColumnsDropped,
    ClinicalCohort,
    Dataset,
    DatasetError,
    DimensionMismatch,
    DuplicateIdentifier,
    EmptyMatrix,
    ExpressionMatrix,
    InsufficientNeighbors,
    MetadataTable,
    MissingFile,
    NonNumericCell,
    SingleCellDataset,
)

logger = logging.getLogger(__name__)


MISSING_TOKENS = frozenset({"", "na"})
MAX_MISSING_FRACTION = 0.25
ARCSINH_COFACTOR = 5.0

MANIFEST_NAME = "manifest.json"
EXPRESSION_NAME = "expression.csv"
METADATA_NAME = "metadata.csv"
MANIFEST_VERSION = 1


def _is_missing(token: str) -> bool:
    return token.strip().lower() in MISSING_TOKENS


def _read_table(path: Path) -> pd.DataFrame:
    """Read a CSV as strings with the first column as a string index."""
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"File not found: {path}")
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except pd.errors.EmptyDataError:
        raise EmptyMatrix(f"File is empty: {path}")
    except (pd.errors.ParserError, UnicodeDecodeError) as e:
        raise DatasetError(f"Could not parse {path}: {e}")

    if frame.shape[1] == 0:
        raise EmptyMatrix(f"No columns in {path}")
    id_col = frame.columns[0]
    frame = frame.set_index(id_col)
    frame.index = frame.index.astype(str)
    frame.index.name = "id"
    if not frame.index.is_unique:
        dupes = frame.index[frame.index.duplicated()].unique().tolist()
        raise DuplicateIdentifier(f"Duplicate ids in {path}: {dupes[:5]}")
    return frame


def _parse_numeric(frame: pd.DataFrame, allow_missing: bool) -> np.ndarray:
    """
    Convert a string frame to floats with Python's exact float parser.

    Missing tokens become NaN when allowed; anything else unparseable (or
    non-finite) raises NonNumericCell with its location.
    """
    values = np.empty(frame.shape, dtype=float)
    row_ids = frame.index.tolist()
    for j, col in enumerate(frame.columns):
        for i, token in enumerate(frame[col].tolist()):
            if allow_missing and _is_missing(token):
                values[i, j] = np.nan
                continue
            try:
                value = float(token)
            except ValueError:
                raise NonNumericCell(row_ids[i], str(col), token)
            if not np.isfinite(value):
                raise NonNumericCell(row_ids[i], str(col), token)
            values[i, j] = value
    return values


def _infer_metadata(frame: pd.DataFrame) -> MetadataTable:
    """
    Type each metadata column.

    A column is numeric when every non-missing value parses as a number
    (and at least one does); otherwise it is categorical with the observed
    strings as levels. Missing tokens become None/NaN either way.
    """
    columns = {}
    types = {}
    for col in frame.columns:
        raw = frame[col].tolist()
        present = [v for v in raw if not _is_missing(v)]
        numeric = bool(present)
        for v in present:
            try:
                float(v)
            except ValueError:
                numeric = False
                break
        if numeric:
            columns[col] = [np.nan if _is_missing(v) else float(v) for v in raw]
            types[col] = "numeric"
        else:
            columns[col] = [None if _is_missing(v) else v for v in raw]
            types[col] = "categorical"
    table = pd.DataFrame(columns, index=frame.index)
    return MetadataTable(table, types)


def _load_pair(expression_path: Path, metadata_path: Path, allow_missing: bool):
    expr = _read_table(expression_path)
    if expr.shape[0] == 0 or expr.shape[1] == 0:
        raise EmptyMatrix(
            f"Expression matrix in {expression_path} has {expr.shape[0]} rows and "
            f"{expr.shape[1]} protein columns"
        )
    meta = _read_table(metadata_path)

    expr_ids = set(expr.index)
    meta_ids = set(meta.index)
    if expr_ids != meta_ids:
        missing = sorted(expr_ids - meta_ids)
        extra = sorted(meta_ids - expr_ids)
        raise DimensionMismatch(
            f"Metadata keys do not match expression rows "
            f"(missing from metadata: {missing[:5]}, not in expression: {extra[:5]})"
        )
    meta = meta.loc[expr.index]

    values = _parse_numeric(expr, allow_missing=allow_missing)
    return expr, values, _infer_metadata(meta)


# =============================================================================
# Single-cell
# =============================================================================


def load_single_cell(
    expression_path: Path,
    metadata_path: Path,
    arcsinh: bool = False,
    sample_field: Optional[str] = None,
) -> SingleCellDataset:
    """
    Load a single-cell dataset from expression and metadata CSVs.

    Args:
        expression_path: CSV with cell ids in the first column and one column per protein.
        metadata_path: CSV keyed on cell id.
        arcsinh: Apply arcsinh(x / 5) to raw intensities.
        sample_field: Metadata column naming each cell's sample. Defaults to
            `sample_id` when the metadata has it; per-sample analyses are
            unavailable without one.

    Returns:
        SingleCellDataset with no clusterings.
    """
    expr, values, meta = _load_pair(Path(expression_path), Path(metadata_path), allow_missing=False)
    if arcsinh:
        values = np.arcsinh(values / ARCSINH_COFACTOR)

    matrix = ExpressionMatrix(values, tuple(expr.index), tuple(expr.columns))
    logger.info(
        f"[Dataset] Loaded single-cell data: {matrix.shape[0]} cells x {matrix.shape[1]} proteins"
    )
    return SingleCellDataset(matrix=matrix, meta=meta, sample_field=sample_field)


# =============================================================================
# Clinical cohort
# =============================================================================


def _nan_euclidean(x: np.ndarray, y: np.ndarray, missing_values=np.nan) -> float:
    """Plain Euclidean distance over columns observed in both rows."""
    both = ~(np.isnan(x) | np.isnan(y))
    if not both.any():
        return np.nan
    diff = x[both] - y[both]
    return float(np.sqrt(np.dot(diff, diff)))


def _check_donors(values: np.ndarray, row_ids: list[str], col_ids: list[str], k: int) -> None:
    observed = ~np.isnan(values)
    # Pairs of rows sharing at least one observed column
    shared = (observed.astype(int) @ observed.T.astype(int)) > 0
    for i, j in zip(*np.where(~observed)):
        donors = observed[:, j] & shared[i]
        donors[i] = False
        available = int(donors.sum())
        if available < k:
            raise InsufficientNeighbors(row_ids[i], col_ids[j], available, k)


def filter_and_impute(
    values: np.ndarray, row_ids: list[str], col_ids: list[str], knn_k: int
) -> tuple[np.ndarray, list[str], list[str], int]:
    """
    Drop columns with more than 25% missing, then kNN-impute the rest.

    Returns:
        (imputed values, kept column ids, dropped column ids, number of imputed cells)
    """
    missing_fraction = np.isnan(values).mean(axis=0)
    keep = missing_fraction <= MAX_MISSING_FRACTION
    dropped = [c for c, k in zip(col_ids, keep) if not k]
    kept = [c for c, k in zip(col_ids, keep) if k]
    if not kept:
        raise AllColumnsDropped(
            f"All {len(col_ids)} proteins exceed {MAX_MISSING_FRACTION:.0%} missing values"
        )
    if dropped:
        logger.info(f"[Dataset] Dropped {len(dropped)} proteins with >25% missing: {dropped[:10]}")

    filtered = values[:, keep]
    n_missing = int(np.isnan(filtered).sum())
    if n_missing == 0:
        return filtered.copy(), kept, dropped, 0

    _check_donors(filtered, row_ids, kept, knn_k)
    imputer = KNNImputer(n_neighbors=knn_k, weights="uniform", metric=_nan_euclidean)
    imputed = imputer.fit_transform(filtered)

    # Observed cells pass through untouched
    observed = ~np.isnan(filtered)
    imputed[observed] = filtered[observed]
    logger.info(f"[Dataset] Imputed {n_missing} missing values with kNN (k={knn_k})")
    return imputed, kept, dropped, n_missing


def load_clinical(
    expression_path: Path,
    metadata_path: Path,
    knn_k: int = 5,
    survival_time_field: Optional[str] = None,
    event_field: Optional[str] = None,
) -> ClinicalCohort:
    """
    Load a clinical cohort: filter sparse proteins and impute missing values.

    Args:
        expression_path: CSV with sample ids in the first column; "" or "NA" mark missing.
        metadata_path: Clinical CSV keyed on sample id.
        knn_k: Neighbour count for imputation.
        survival_time_field: Optional clinical column holding follow-up time.
        event_field: Optional clinical column holding 1=event, 0=censored.
    """
    if knn_k < 1:
        raise DatasetError(f"knn_k must be positive, got {knn_k}")

    expr, values, clinical = _load_pair(Path(expression_path), Path(metadata_path), allow_missing=True)
    row_ids = expr.index.tolist()
    imputed, kept, dropped, n_imputed = filter_and_impute(
        values, row_ids, [str(c) for c in expr.columns], knn_k
    )

    for name in (survival_time_field, event_field):
        if name is not None and name not in clinical.types:
            raise DatasetError(f"Clinical table has no field {name!r}")

    matrix = ExpressionMatrix(imputed, tuple(row_ids), tuple(kept))
    logger.info(
        f"[Dataset] Loaded clinical cohort: {matrix.shape[0]} samples x {matrix.shape[1]} proteins"
    )
    return ClinicalCohort(
        matrix=matrix,
        clinical=clinical,
        survival_time_field=survival_time_field,
        event_field=event_field,
        dropped_proteins=tuple(dropped),
        imputed_count=n_imputed,
    )


# =============================================================================
# Persistence
# =============================================================================


def save_dataset(dataset: Dataset, directory: Path) -> Path:
    """
    Write a dataset to a directory: two CSVs plus a JSON manifest.

    Floats are written with repr precision so values reload exactly.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    frame = dataset.matrix.to_frame()
    frame.index.name = "id"
    frame.to_csv(directory / EXPRESSION_NAME, float_format=None)

    meta = dataset.meta
    meta_frame = meta.frame.copy()
    meta_frame.index.name = "id"
    meta_frame.to_csv(directory / METADATA_NAME)

    manifest: dict = {
        "version": MANIFEST_VERSION,
        "kind": dataset.kind,
        "metadata_types": dict(meta.types),
    }
    if isinstance(dataset, SingleCellDataset):
        manifest["sample_field"] = dataset.sample_field
        manifest["clusterings"] = {
            name: labels.tolist() for name, labels in dataset.clusterings.items()
        }
        manifest["cell_types"] = {
            name: {str(k): v for k, v in mapping.items()}
            for name, mapping in dataset.cell_types.items()
        }
    else:
        manifest["survival_time_field"] = dataset.survival_time_field
        manifest["event_field"] = dataset.event_field
        manifest["dropped_proteins"] = list(dataset.dropped_proteins)
        manifest["imputed_count"] = dataset.imputed_count

    with open(directory / MANIFEST_NAME, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)

    logger.debug(f"[Dataset] Saved {dataset.kind} dataset to {directory}")
    return directory


def load_dataset(directory: Path) -> Dataset:
    """Load a dataset written by save_dataset()."""
    directory = Path(directory)
    manifest_path = directory / MANIFEST_NAME
    if not manifest_path.is_file():
        raise MissingFile(f"No dataset manifest in {directory}")
    with open(manifest_path, "r", encoding="utf-8") as f:
        manifest = json.load(f)

    expr = _read_table(directory / EXPRESSION_NAME)
    values = _parse_numeric(expr, allow_missing=False)
    matrix = ExpressionMatrix(values, tuple(expr.index), tuple(expr.columns))

    raw_meta = _read_table(directory / METADATA_NAME).loc[list(matrix.row_ids)]
    types = manifest["metadata_types"]
    columns = {}
    for col in raw_meta.columns:
        raw = raw_meta[col].tolist()
        if types[col] == "numeric":
            columns[col] = [np.nan if _is_missing(v) else float(v) for v in raw]
        else:
            columns[col] = [None if v == "" else v for v in raw]
    meta = MetadataTable(pd.DataFrame(columns, index=raw_meta.index), types)

    if manifest["kind"] == "single_cell":
        return SingleCellDataset(
            matrix=matrix,
            meta=meta,
            clusterings={k: np.asarray(v, dtype=int) for k, v in manifest["clusterings"].items()},
            cell_types={
                name: {int(k): v for k, v in mapping.items()}
                for name, mapping in manifest["cell_types"].items()
            },
            sample_field=manifest.get("sample_field"),
        )
    return ClinicalCohort(
        matrix=matrix,
        clinical=meta,
        survival_time_field=manifest.get("survival_time_field"),
        event_field=manifest.get("event_field"),
        dropped_proteins=tuple(manifest.get("dropped_proteins", [])),
        imputed_count=int(manifest.get("imputed_count", 0)),
    )
