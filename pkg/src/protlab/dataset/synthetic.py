"""
Seeded synthetic fixtures.

toy-pbmc: 300 cells x 10 proteins over 6 samples (3 Disease, 3 Healthy) with
four planted populations; T cells are 120 of the 300 cells and B cells are
enriched in Disease samples.

toy-cohort: 40 samples x 50 proteins with two planted subtypes, a protein
missing in 13/40 samples, scattered missing values elsewhere and survival
columns in which high MKI67 shortens survival.
"""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np
import pandas as pd

from .io import load_clinical, load_single_cell
from .models import ClinicalCohort, SingleCellDataset

logger = logging.getLogger(__name__)


PBMC_PROTEINS = ("CD3", "CD4", "CD8", "CD19", "CD20", "CD14", "CD16", "CD56", "HLA-DR", "CD45RO")

# population -> proteins expressed high
PBMC_POPULATIONS = {
    "T Cells": ("CD3", "CD4", "CD8", "CD45RO"),
    "B Cells": ("CD19", "CD20", "HLA-DR"),
    "Monocytes": ("CD14", "HLA-DR", "CD16"),
    "NK Cells": ("CD56", "CD16"),
}

# cells per sample for each population
PBMC_COMPOSITION = {
    "Disease": {"T Cells": 20, "B Cells": 15, "Monocytes": 5, "NK Cells": 10},
    "Healthy": {"T Cells": 20, "B Cells": 5, "Monocytes": 15, "NK Cells": 10},
}

COHORT_PROTEINS = (
    "CD3E", "CD4", "CD8A", "CD19", "MS4A1", "CD14", "FCGR3A", "NCAM1", "HLA-DRA", "PTPRC",
    "ALB", "APOA1", "APOB", "TTR", "SERPINA1", "HP", "FGA", "FGB", "FGG", "CRP",
    "ORM1", "AHSG", "TF", "C3", "C4A", "CFB", "VTN", "PLG", "KNG1", "HRG",
    "MKI67", "PCNA", "TOP2A", "CCNB1", "CDK1", "MCM2", "MCM3", "MCM7", "AURKA", "BUB1",
    "EGFR", "ERBB2", "KRAS", "MYC", "TP53", "VIM", "CDH1", "CDH2", "SNAI1", "TWIST1",
)

SPARSE_PROTEIN = "FGB"
SURVIVAL_PROTEIN = "MKI67"


def make_toy_pbmc(seed: int = 0) -> tuple[pd.DataFrame, pd.DataFrame, np.ndarray]:
    """
    Generate toy-pbmc tables.

    Returns:
        (expression frame, metadata frame, per-cell population names)
    """
    rng = np.random.default_rng(seed)
    rows = []
    meta_rows = []
    truth = []
    samples = [("S1", "Disease"), ("S2", "Disease"), ("S3", "Disease"),
               ("S4", "Healthy"), ("S5", "Healthy"), ("S6", "Healthy")]
    ages = {"S1": 61, "S2": 54, "S3": 67, "S4": 58, "S5": 49, "S6": 63}

    cell = 0
    for sample, condition in samples:
        for population, count in PBMC_COMPOSITION[condition].items():
            high = PBMC_POPULATIONS[population]
            for _ in range(count):
                profile = rng.normal(0.3, 0.15, size=len(PBMC_PROTEINS))
                for j, protein in enumerate(PBMC_PROTEINS):
                    if protein in high:
                        profile[j] = rng.normal(4.0, 0.3)
                # Disease shifts CD45RO up in T cells
                if population == "T Cells" and condition == "Disease":
                    profile[PBMC_PROTEINS.index("CD45RO")] += 1.0
                rows.append(np.abs(profile))
                meta_rows.append(
                    {"id": f"cell{cell:04d}", "sample_id": sample, "condition": condition, "age": ages[sample]}
                )
                truth.append(population)
                cell += 1

    ids = [m["id"] for m in meta_rows]
    expr = pd.DataFrame(np.vstack(rows), index=ids, columns=list(PBMC_PROTEINS))
    expr.index.name = "id"
    meta = pd.DataFrame(meta_rows).set_index("id")
    return expr, meta, np.array(truth, dtype=object)


def make_toy_cohort(seed: int = 0) -> tuple[pd.DataFrame, pd.DataFrame]:
    """
    Generate toy-cohort tables (expression with NaN holes, clinical table).

    Samples 0-19 are high on the first 25 proteins, samples 20-39 on the last 25.
    """
    rng = np.random.default_rng(seed)
    n = 40
    p = len(COHORT_PROTEINS)
    values = rng.normal(5.0, 0.3, size=(n, p))
    values[:20, :25] += 3.0
    values[20:, 25:] += 3.0

    ids = [f"P{i + 1:03d}" for i in range(n)]
    expr = pd.DataFrame(values, index=ids, columns=list(COHORT_PROTEINS))
    expr.index.name = "id"

    # 13/40 missing: dropped by the 25% rule
    sparse_rows = rng.choice(n, size=13, replace=False)
    expr.iloc[sparse_rows, COHORT_PROTEINS.index(SPARSE_PROTEIN)] = np.nan
    # 2/40 missing in a few others: imputed
    for protein in ("ALB", "EGFR", "CD4"):
        holes = rng.choice(n, size=2, replace=False)
        expr.iloc[holes, COHORT_PROTEINS.index(protein)] = np.nan

    marker = values[:, COHORT_PROTEINS.index(SURVIVAL_PROTEIN)]
    hazard = np.exp(1.2 * (marker - marker.mean()) / marker.std())
    time = rng.exponential(36.0 / hazard)
    censor = rng.uniform(12.0, 96.0, size=n)
    os_time = np.round(np.minimum(time, censor), 2)
    os_event = (time <= censor).astype(int)

    clinical = pd.DataFrame(
        {
            "condition": ["Tumor" if i % 2 == 0 else "Normal" for i in range(n)],
            "stage": [("I", "II", "III", "IV")[i % 4] for i in range(n)],
            "age": rng.integers(35, 80, size=n),
            "os_time": os_time,
            "os_event": os_event,
        },
        index=ids,
    )
    clinical.index.name = "id"
    return expr, clinical


def make_two_block_matrix(seed: int = 0, n_samples: int = 40, n_proteins: int = 50) -> tuple[np.ndarray, np.ndarray]:
    """
    Planted-partition matrix: first half of samples high on first half of proteins.

    Returns:
        (values, true labels)
    """
    rng = np.random.default_rng(seed)
    values = rng.uniform(0.0, 0.5, size=(n_samples, n_proteins))
    half_s, half_p = n_samples // 2, n_proteins // 2
    values[:half_s, :half_p] += 5.0
    values[half_s:, half_p:] += 5.0
    labels = np.repeat([0, 1], [half_s, n_samples - half_s])
    return values, labels


def make_two_blobs(seed: int = 0, n_per_blob: int = 50, n_features: int = 5) -> tuple[np.ndarray, np.ndarray]:
    """Two Gaussian blobs separated by well over 10 sigma."""
    rng = np.random.default_rng(seed)
    a = rng.normal(0.0, 1.0, size=(n_per_blob, n_features))
    b = rng.normal(20.0, 1.0, size=(n_per_blob, n_features))
    labels = np.repeat([0, 1], n_per_blob)
    return np.vstack([a, b]), labels


# =============================================================================
# Writers / loaders for the built-in names
# =============================================================================


def write_toy_pbmc(directory: Path, seed: int = 0) -> tuple[Path, Path]:
    """Write toy-pbmc as expression.csv + metadata.csv."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    expr, meta, _ = make_toy_pbmc(seed)
    expr_path = directory / "expression.csv"
    meta_path = directory / "metadata.csv"
    expr.to_csv(expr_path)
    meta.to_csv(meta_path)
    return expr_path, meta_path


def write_toy_cohort(directory: Path, seed: int = 0) -> tuple[Path, Path]:
    """Write toy-cohort as expression.csv (NA for missing) + metadata.csv."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    expr, clinical = make_toy_cohort(seed)
    expr_path = directory / "expression.csv"
    meta_path = directory / "metadata.csv"
    expr.to_csv(expr_path, na_rep="NA")
    clinical.to_csv(meta_path)
    return expr_path, meta_path


def toy_pbmc(directory: Path, seed: int = 0) -> SingleCellDataset:
    """Write then load toy-pbmc."""
    expr_path, meta_path = write_toy_pbmc(directory, seed)
    return load_single_cell(expr_path, meta_path)


def toy_cohort(directory: Path, seed: int = 0, knn_k: int = 5) -> ClinicalCohort:
    """Write then load toy-cohort with its survival fields set."""
    expr_path, meta_path = write_toy_cohort(directory, seed)
    return load_clinical(
        expr_path, meta_path, knn_k=knn_k, survival_time_field="os_time", event_field="os_event"
    )


BUILTIN_DATASETS = {
    "toy-pbmc": toy_pbmc,
    "toy-cohort": toy_cohort,
}
