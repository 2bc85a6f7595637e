"""Statistical procedures behind the workflow catalog."""

from .clustering import SomClustering, rank_markers, som_cluster, top_markers
from .consensus import ConsensusClusteringResult, nmf_consensus, nmf_multiplicative
from .correlation import pearson
from .differential import REST, bulk_diff_expression, diff_abundance, diff_expression
from .enrichment import EnrichmentResult, GeneSetLibrary, gsea, ora, read_gmt
from .errors import StatkitError
from .multiple import bh_adjust
from .survival import cox_univariate, logrank_threshold_sweep
from .tables import (
    CorrelationRow,
    DAResultRow,
    DEResultRow,
    EnrichmentResultRow,
    SurvivalResult,
    format_number,
    rows_to_frame,
)

__all__ = [
    "REST",
    "ConsensusClusteringResult",
    "CorrelationRow",
    "DAResultRow",
    "DEResultRow",
    "EnrichmentResult",
    "EnrichmentResultRow",
    "GeneSetLibrary",
    "SomClustering",
    "StatkitError",
    "SurvivalResult",
    "bh_adjust",
    "bulk_diff_expression",
    "cox_univariate",
    "diff_abundance",
    "diff_expression",
    "format_number",
    "gsea",
    "logrank_threshold_sweep",
    "nmf_consensus",
    "nmf_multiplicative",
    "ora",
    "pearson",
    "rank_markers",
    "read_gmt",
    "rows_to_frame",
    "som_cluster",
    "top_markers",
]
