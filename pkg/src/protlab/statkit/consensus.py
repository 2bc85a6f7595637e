"""
Consensus NMF subtyping of cohort samples.

For each candidate k, several seeded multiplicative-update NMF restarts are
run; samples go to the component with the largest weight. Agreement across
restarts gives a consensus matrix (scored by PAC) and the best restart's
assignment is scored by Calinski-Harabasz and Davies-Bouldin. The chosen k
minimises the sum of per-metric ranks.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import pandas as pd
from scipy.stats import rankdata
from sklearn.metrics import calinski_harabasz_score, davies_bouldin_score

from .errors import NegativeAfterShift, StatkitError, TooFewSamples

logger = logging.getLogger(__name__)


DEFAULT_K_RANGE = (2, 3, 4)
PAC_LOWER = 0.1
PAC_UPPER = 0.9
NMF_MAX_ITER = 300
NMF_TOL = 1e-7
EPS = 1e-12


@dataclass(frozen=True)
class NMFFit:
    W: np.ndarray  # samples x k
    H: np.ndarray  # k x proteins
    loss_history: tuple[float, ...]

    @property
    def loss(self) -> float:
        return self.loss_history[-1]

    def assignments(self) -> np.ndarray:
        return np.argmax(self.W, axis=1)


@dataclass(frozen=True)
class ConsensusClusteringResult:
    chosen_k: int
    assignments: np.ndarray
    metric_table: pd.DataFrame
    shift: np.ndarray = field(repr=False, default=None)


def nonnegative_shift(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Shift columns with negative entries up by their minimum; return (shifted, shift)."""
    shift = np.minimum(x.min(axis=0), 0.0)
    shifted = x - shift
    if (shifted < 0).any():
        raise NegativeAfterShift("Column shift left negative entries")
    return shifted, -shift


def nmf_multiplicative(v: np.ndarray, k: int, seed, max_iter: int = NMF_MAX_ITER, tol: float = NMF_TOL) -> NMFFit:
    """
    Frobenius-loss NMF, V ~= W H, with Lee-Seung multiplicative updates.

    The loss history is recorded after every iteration; it is non-increasing
    up to floating-point error.
    """
    rng = np.random.default_rng(seed)
    n, d = v.shape
    scale = np.sqrt(max(v.mean(), EPS) / k)
    w = rng.uniform(0.0, 1.0, size=(n, k)) * scale + EPS
    h = rng.uniform(0.0, 1.0, size=(k, d)) * scale + EPS

    history = [float(np.linalg.norm(v - w @ h) ** 2)]
    for _ in range(max_iter):
        h *= (w.T @ v) / (w.T @ w @ h + EPS)
        w *= (v @ h.T) / (w @ h @ h.T + EPS)
        loss = float(np.linalg.norm(v - w @ h) ** 2)
        history.append(loss)
        if history[-2] - loss <= tol * max(history[-2], EPS):
            break
    return NMFFit(w, h, tuple(history))


def connectivity(labels: np.ndarray) -> np.ndarray:
    return (labels[:, None] == labels[None, :]).astype(float)


def pac_score(consensus: np.ndarray, lower: float = PAC_LOWER, upper: float = PAC_UPPER) -> float:
    """Fraction of off-diagonal sample pairs with consensus strictly inside (lower, upper)."""
    iu = np.triu_indices(consensus.shape[0], k=1)
    values = consensus[iu]
    if values.size == 0:
        return 0.0
    return float(np.mean((values > lower) & (values < upper)))


def _contiguous(labels: np.ndarray) -> np.ndarray:
    _, inverse = np.unique(labels, return_inverse=True)
    return inverse.astype(int)


def nmf_consensus(
    matrix,
    k_range: Sequence[int] = DEFAULT_K_RANGE,
    restarts: int = 10,
    seed: int = 0,
) -> ConsensusClusteringResult:
    """
    Choose a subtype count in k_range by rank-aggregating CH, DB and PAC.

    Args:
        matrix: ExpressionMatrix or samples x proteins array.
        k_range: Candidate cluster counts.
        restarts: Seeded NMF restarts per k.
        seed: Base seed.
    """
    x = np.asarray(getattr(matrix, "values", matrix), dtype=float)
    k_values = sorted(set(int(k) for k in k_range))
    if not k_values or k_values[0] < 2:
        raise StatkitError(f"k_range must hold integers >= 2, got {list(k_range)}")
    if x.shape[0] < max(k_values):
        raise TooFewSamples(f"{x.shape[0]} samples cannot form {max(k_values)} clusters")
    if restarts < 1:
        raise StatkitError("restarts must be at least 1")

    v, shift = nonnegative_shift(x)
    if shift.any():
        logger.info(f"[Statkit] NMF input shifted on {int((shift > 0).sum())} columns")

    records = []
    best_assignments: dict[int, np.ndarray] = {}
    for k in k_values:
        fits = [nmf_multiplicative(v, k, seed=[seed, k, r]) for r in range(restarts)]
        consensus = np.mean([connectivity(f.assignments()) for f in fits], axis=0)
        best = min(fits, key=lambda f: f.loss)
        labels = _contiguous(best.assignments())
        best_assignments[k] = labels

        if np.unique(labels).size >= 2:
            ch = float(calinski_harabasz_score(x, labels))
            db = float(davies_bouldin_score(x, labels))
        else:
            ch, db = -np.inf, np.inf
        records.append(
            {"k": k, "calinski_harabasz": ch, "davies_bouldin": db, "pac": pac_score(consensus), "loss": best.loss}
        )

    table = pd.DataFrame.from_records(records)
    table["rank_ch"] = rankdata(-table["calinski_harabasz"].to_numpy())
    table["rank_db"] = rankdata(table["davies_bouldin"].to_numpy())
    table["rank_pac"] = rankdata(table["pac"].to_numpy())
    table["rank_sum"] = table["rank_ch"] + table["rank_db"] + table["rank_pac"]

    # smallest rank sum; table is sorted by k so idxmin breaks ties toward smaller k
    chosen_k = int(table.loc[table["rank_sum"].idxmin(), "k"])
    logger.info(f"[Statkit] Consensus NMF chose k={chosen_k}")
    return ConsensusClusteringResult(
        chosen_k=chosen_k,
        assignments=best_assignments[chosen_k],
        metric_table=table,
        shift=shift,
    )
