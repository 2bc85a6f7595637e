"""
Gene-set enrichment: GMT parsing, hypergeometric over-representation and
weighted running-sum GSEA with label-permutation nulls.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np
from scipy.stats import hypergeom

from .errors import (
    EmptyIntersection,
    EmptyQuery,
    MalformedGeneSetFile,
    QueryOutsideUniverse,
    SetCoversWholeList,
    StatkitError,
)
from .multiple import bh_adjust
from .tables import EnrichmentResultRow

logger = logging.getLogger(__name__)


GeneSets = Mapping[str, frozenset]


@dataclass(frozen=True)
class GeneSetLibrary:
    """Gene sets from one source database (GO, KEGG, Reactome, ...)."""

    source: str
    sets: Mapping[str, frozenset]
    descriptions: Mapping[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class EnrichmentResult:
    """Tested rows plus the ids of sets skipped as untestable."""

    rows: list[EnrichmentResultRow]
    skipped: tuple[str, ...] = ()


def read_gmt(path: Path, source: Optional[str] = None) -> GeneSetLibrary:
    """
    Parse a GMT file: set id, description, then members, tab-separated.

    The source tag defaults to the file stem.
    """
    path = Path(path)
    sets: dict[str, frozenset] = {}
    descriptions: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) < 3:
                raise MalformedGeneSetFile(f"{path}:{lineno}: expected id, description and members")
            set_id = parts[0].strip()
            members = frozenset(p.strip() for p in parts[2:] if p.strip())
            if not set_id or not members:
                raise MalformedGeneSetFile(f"{path}:{lineno}: empty set id or member list")
            sets[set_id] = members
            descriptions[set_id] = parts[1].strip()
    logger.debug(f"[Statkit] Read {len(sets)} gene sets from {path.name}")
    return GeneSetLibrary(source=source or path.stem, sets=sets, descriptions=descriptions)


# =============================================================================
# Over-representation
# =============================================================================


def _odds_ratio(overlap: int, set_size: int, query_size: int, universe_size: int) -> float:
    a = overlap
    b = query_size - overlap
    c = set_size - overlap
    d = universe_size - set_size - query_size + overlap
    if 0 in (a, b, c, d):
        a, b, c, d = a + 0.5, b + 0.5, c + 0.5, d + 0.5
    return float((a * d) / (b * c))


def ora(
    query: Iterable[str],
    universe: Iterable[str],
    gene_sets: GeneSets,
    source: str = "",
    direction: str = "two-sided",
) -> EnrichmentResult:
    """
    Hypergeometric upper-tail test of query overlap with each gene set.

    Gene sets are intersected with the universe first; sets left empty are
    skipped and reported.
    """
    query_set = set(query)
    universe_set = set(universe)
    if not query_set:
        raise EmptyQuery("ORA query is empty")
    outside = query_set - universe_set
    if outside:
        raise QueryOutsideUniverse(f"{len(outside)} query members outside universe: {sorted(outside)[:5]}")

    n_universe = len(universe_set)
    n_query = len(query_set)
    raw = []
    skipped = []
    for set_id, members in gene_sets.items():
        restricted = set(members) & universe_set
        if not restricted:
            skipped.append(set_id)
            continue
        overlap = len(restricted & query_set)
        p = float(hypergeom.sf(overlap - 1, n_universe, len(restricted), n_query))
        raw.append((set_id, _odds_ratio(overlap, len(restricted), n_query, n_universe), min(max(p, 0.0), 1.0), overlap, len(restricted)))

    if skipped:
        logger.debug(f"[Statkit] ORA skipped {len(skipped)} sets disjoint from the universe")
    adjusted = bh_adjust([r[2] for r in raw])
    rows = [
        EnrichmentResultRow(
            set_id=set_id,
            source=source,
            direction=direction,
            method="ORA",
            statistic=odds,
            p=p,
            p_adj=float(q),
            overlap=overlap,
            set_size=size,
        )
        for (set_id, odds, p, overlap, size), q in zip(raw, adjusted)
    ]
    return EnrichmentResult(rows, tuple(skipped))


# =============================================================================
# GSEA
# =============================================================================


def running_enrichment(tag_indicator: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """
    Running-sum enrichment scores.

    tag_indicator: (N,) or (P, N) 0/1 hits; weights: (N,) |score|**1.
    Returns ES per row: the signed maximum deviation from zero.
    """
    tags = np.atleast_2d(tag_indicator).astype(float)
    n = tags.shape[1]
    hit_weights = tags * weights[None, :]
    norm_hit = hit_weights.sum(axis=1, keepdims=True)
    # all-zero hit scores fall back to unweighted hits
    zero = norm_hit[:, 0] <= 0
    if zero.any():
        hit_weights[zero] = tags[zero]
        norm_hit[zero] = tags[zero].sum(axis=1, keepdims=True)
    n_miss = n - tags.sum(axis=1, keepdims=True)
    steps = hit_weights / norm_hit - (1.0 - tags) / n_miss
    res = np.cumsum(steps, axis=1)
    max_es = res.max(axis=1)
    min_es = res.min(axis=1)
    es = np.where(np.abs(max_es) > np.abs(min_es), max_es, min_es)
    return np.clip(es, -1.0, 1.0)


def enrichment_score(proteins: Sequence[str], scores: Sequence[float], members: Iterable[str]) -> float:
    """ES of one set against a ranked list (sorted descending by score)."""
    tags = np.isin(np.asarray(proteins, dtype=object), list(set(members))).astype(int)
    return float(running_enrichment(tags, np.abs(np.asarray(scores, dtype=float)))[0])


def gsea(
    ranked: Sequence[tuple[str, float]],
    gene_sets: GeneSets,
    n_perm: int = 1000,
    seed: int = 0,
    source: str = "",
    skip_invalid: bool = False,
) -> EnrichmentResult:
    """
    Weighted Kolmogorov-Smirnov GSEA (exponent 1) with gene-label permutations.

    NES divides ES by the mean |null ES| of the same sign. The p-value is
    the +1-smoothed two-sided empirical tail, BH-adjusted across sets.

    Raises:
        EmptyIntersection, SetCoversWholeList (unless skip_invalid)
    """
    proteins = [p for p, _ in ranked]
    if len(set(proteins)) != len(proteins):
        raise StatkitError("Ranked list contains duplicate proteins")
    scores = np.array([s for _, s in ranked], dtype=float)
    order = np.argsort(-scores, kind="mergesort")
    proteins = [proteins[i] for i in order]
    scores = scores[order]
    weights = np.abs(scores)
    n = len(proteins)
    protein_array = np.asarray(proteins, dtype=object)

    rng = np.random.default_rng(seed)
    raw = []
    skipped = []
    for set_id, members in gene_sets.items():
        tags = np.isin(protein_array, list(set(members))).astype(int)
        hits = int(tags.sum())
        try:
            if hits == 0:
                raise EmptyIntersection(f"Gene set {set_id!r} shares no proteins with the ranking")
            if hits == n:
                raise SetCoversWholeList(f"Gene set {set_id!r} covers the whole ranking")
        except (EmptyIntersection, SetCoversWholeList):
            if not skip_invalid:
                raise
            skipped.append(set_id)
            continue

        es = float(running_enrichment(tags, weights)[0])
        permuted = np.tile(tags, (n_perm, 1))
        permuted = rng.permuted(permuted, axis=1)
        null = running_enrichment(permuted, weights)

        same_sign = null[null >= 0] if es >= 0 else null[null < 0]
        nes = es / float(np.mean(np.abs(same_sign))) if same_sign.size and np.any(same_sign != 0) else None
        p = (1.0 + float(np.sum(np.abs(null) >= abs(es) - 1e-12))) / (n_perm + 1.0)
        raw.append((set_id, es, nes, min(p, 1.0), hits, len(set(members))))

    adjusted = bh_adjust([r[3] for r in raw])
    rows = [
        EnrichmentResultRow(
            set_id=set_id,
            source=source,
            direction="two-sided",
            method="GSEA",
            statistic=es,
            p=p,
            p_adj=float(q),
            overlap=hits,
            set_size=size,
            nes=nes,
        )
        for (set_id, es, nes, p, hits, size), q in zip(raw, adjusted)
    ]
    return EnrichmentResult(rows, tuple(skipped))
