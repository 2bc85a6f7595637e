"""Proteomics dataset types, ingestion and summaries."""

from .io import filter_and_impute, load_clinical, load_dataset, load_single_cell, save_dataset
from .models import (
    AllColumnsDropped,
    ClinicalCohort,
    DataDescription,
    Dataset,
    DatasetError,
    DimensionMismatch,
    DuplicateIdentifier,
    EmptyMatrix,
    ExpressionMatrix,
    FieldInfo,
    InsufficientNeighbors,
    InvalidDataset,
    MetadataTable,
    MissingFile,
    NonNumericCell,
    SingleCellDataset,
    UnknownCellType,
    UnknownClustering,
    UnknownField,
)
from .ops import structured_summary, subset_by_cell_type

__all__ = [
    "AllColumnsDropped",
    "ClinicalCohort",
    "DataDescription",
    "Dataset",
    "DatasetError",
    "DimensionMismatch",
    "DuplicateIdentifier",
    "EmptyMatrix",
    "ExpressionMatrix",
    "FieldInfo",
    "InsufficientNeighbors",
    "InvalidDataset",
    "MetadataTable",
    "MissingFile",
    "NonNumericCell",
    "SingleCellDataset",
    "UnknownCellType",
    "UnknownClustering",
    "UnknownField",
    "filter_and_impute",
    "load_clinical",
    "load_dataset",
    "load_single_cell",
    "save_dataset",
    "structured_summary",
    "subset_by_cell_type",
]
