"""
Self-organizing map clustering with Ward metaclustering, and cluster
marker ranking.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage

from .errors import KTooLarge, UnknownCluster

logger = logging.getLogger(__name__)


SOM_EPOCHS = 10
SOM_FINAL_RADIUS = 0.5


@dataclass(frozen=True)
class SomClustering:
    """Per-row labels plus how they were obtained."""

    labels: np.ndarray
    grid_side: int
    n_clusters: int
    degenerate: bool = False


def _as_array(matrix) -> np.ndarray:
    values = getattr(matrix, "values", matrix)
    return np.asarray(values, dtype=float)


def _contiguous(labels: np.ndarray) -> np.ndarray:
    _, inverse = np.unique(labels, return_inverse=True)
    return inverse.astype(int)


def _squared_distances(x: np.ndarray, codes: np.ndarray) -> np.ndarray:
    d2 = (x * x).sum(axis=1)[:, None] - 2.0 * x @ codes.T + (codes * codes).sum(axis=1)[None, :]
    return np.maximum(d2, 0.0)


def train_som(x: np.ndarray, grid_side: int, seed: int, epochs: int = SOM_EPOCHS) -> np.ndarray:
    """
    Batch-train a square SOM and return its code vectors (grid_side**2 x d).

    The Gaussian neighbourhood radius decays linearly from half the grid
    diagonal to SOM_FINAL_RADIUS over the epochs.
    """
    rng = np.random.default_rng(seed)
    n_nodes = grid_side * grid_side
    init = rng.choice(x.shape[0], size=n_nodes, replace=x.shape[0] < n_nodes)
    codes = x[init].copy()

    coords = np.array([(i // grid_side, i % grid_side) for i in range(n_nodes)], dtype=float)
    grid_d2 = ((coords[:, None, :] - coords[None, :, :]) ** 2).sum(axis=2)

    start = max(math.sqrt(2.0) * (grid_side - 1) / 2.0, SOM_FINAL_RADIUS)
    for epoch in range(epochs):
        frac = epoch / max(epochs - 1, 1)
        radius = start + (SOM_FINAL_RADIUS - start) * frac
        bmu = np.argmin(_squared_distances(x, codes), axis=1)
        # h[j, node]: neighbourhood weight of node for the BMU j
        h = np.exp(-grid_d2 / (2.0 * radius * radius))
        weights = h[bmu]  # rows x nodes
        denom = weights.sum(axis=0)
        numer = weights.T @ x
        active = denom > 1e-12
        codes[active] = numer[active] / denom[active, None]
    return codes


def som_cluster(matrix, k: int, seed: int = 0) -> SomClustering:
    """
    Cluster rows with a self-organizing map followed by Ward metaclustering.

    Args:
        matrix: ExpressionMatrix or 2-D array (rows are observations).
        k: Number of metaclusters.
        seed: Seed for code-vector initialisation.

    Returns:
        SomClustering with contiguous labels. Metaclusters that receive no
        rows are dropped, so n_clusters can be below k.
    """
    x = _as_array(matrix)
    n = x.shape[0]
    if k < 1:
        raise KTooLarge(f"k must be at least 1, got {k}")
    if k > n:
        raise KTooLarge(f"Cannot form {k} clusters from {n} rows")

    degenerate = bool(np.all(np.ptp(x, axis=0) == 0))
    if degenerate:
        logger.warning("[Statkit] SOM input has zero variance in every column")

    grid_side = math.ceil(math.sqrt(4 * k))
    if k == 1:
        return SomClustering(np.zeros(n, dtype=int), grid_side, 1, degenerate)

    codes = train_som(x, grid_side, seed)
    bmu = np.argmin(_squared_distances(x, codes), axis=1)

    tree = linkage(codes, method="ward")
    code_labels = fcluster(tree, t=k, criterion="maxclust") - 1
    labels = _contiguous(code_labels[bmu])
    n_clusters = int(labels.max()) + 1
    if n_clusters < k:
        logger.info(f"[Statkit] SOM metaclustering produced {n_clusters} non-empty clusters of {k}")
    return SomClustering(labels, grid_side, n_clusters, degenerate)


# =============================================================================
# Marker ranking
# =============================================================================


def marker_scores(values: np.ndarray, labels: np.ndarray, cluster: int) -> tuple[np.ndarray, np.ndarray]:
    """
    Standardized and raw mean differences of one cluster against the rest.

    Pooled SD uses the usual (n - 1) weighting. A zero pooled SD gives a
    score of 0 for no difference and +/-inf otherwise. With no rest cells
    the cluster is compared against zero.
    """
    values = np.asarray(values, dtype=float)
    inside = labels == cluster
    a = values[inside]
    b = values[~inside]
    mean_a = a.mean(axis=0)
    if b.shape[0] == 0:
        raw = mean_a
        sd = a.std(axis=0, ddof=1) if a.shape[0] > 1 else np.zeros_like(mean_a)
    else:
        raw = mean_a - b.mean(axis=0)
        n_a, n_b = a.shape[0], b.shape[0]
        var_a = a.var(axis=0, ddof=1) if n_a > 1 else np.zeros_like(mean_a)
        var_b = b.var(axis=0, ddof=1) if n_b > 1 else np.zeros_like(mean_a)
        dof = max(n_a + n_b - 2, 1)
        sd = np.sqrt(((n_a - 1) * var_a + (n_b - 1) * var_b) / dof)

    with np.errstate(divide="ignore", invalid="ignore"):
        smd = np.where(sd > 0, raw / np.where(sd > 0, sd, 1.0), np.sign(raw) * np.inf)
    smd = np.where(raw == 0, np.where(sd > 0, smd, 0.0), smd)
    return smd, raw


def rank_markers(values: np.ndarray, labels: np.ndarray, proteins, cluster: int, n: int) -> list[str]:
    """Proteins ranked by SMD, ties by raw difference then id; min(n, proteins) entries."""
    labels = np.asarray(labels)
    if cluster not in set(np.unique(labels).tolist()):
        raise UnknownCluster(f"Cluster {cluster} not present")
    smd, raw = marker_scores(values, labels, cluster)
    order = sorted(range(len(proteins)), key=lambda j: (-smd[j], -raw[j], proteins[j]))
    return [proteins[j] for j in order[: max(0, min(n, len(proteins)))]]


def top_markers(dataset, clustering: str, cluster: int, n: int = 10) -> list[str]:
    """Top-n markers of a cluster in a SingleCellDataset clustering."""
    labels = dataset.labels(clustering)
    return rank_markers(dataset.matrix.values, labels, list(dataset.proteins), int(cluster), n)
