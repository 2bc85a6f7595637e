"""
Result-row types and their fixed-column CSV tables.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from typing import Iterable, Literal, Optional

import pandas as pd

from .errors import StatkitError


def format_number(value: Optional[float]) -> str:
    """Render a statistic the way it appears in summaries and hypotheses."""
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return "NA"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    if value != 0 and abs(value) < 1e-4:
        return f"{value:.3e}"
    text = f"{value:.6f}".rstrip("0").rstrip(".")
    return "0" if text in ("-0", "") else text


@dataclass(frozen=True)
class DAResultRow:
    contrast: str
    cell_type: str
    logFC: float
    p: float
    p_adj: float

    def render(self) -> str:
        return f"logFC={format_number(self.logFC)}, p_adj={format_number(self.p_adj)}"


@dataclass(frozen=True)
class DEResultRow:
    contrast: str
    cluster: Optional[str]
    protein: str
    logFC: float
    p: float
    p_adj: float

    def render(self) -> str:
        return f"logFC={format_number(self.logFC)}, p_adj={format_number(self.p_adj)}"


@dataclass(frozen=True)
class SurvivalResult:
    molecule: str
    method: Literal["discrete", "continuous"]
    statistic: float
    p: float
    threshold: Optional[float] = None
    percentile: Optional[int] = None
    hazard_ratio: Optional[float] = None
    p_adj: Optional[float] = None

    def __post_init__(self) -> None:
        discrete = self.threshold is not None and self.percentile is not None and self.hazard_ratio is None
        continuous = self.threshold is None and self.percentile is None and self.hazard_ratio is not None
        if (self.method == "discrete" and not discrete) or (self.method == "continuous" and not continuous):
            raise StatkitError(f"Inconsistent fields for {self.method} survival result on {self.molecule}")


@dataclass(frozen=True)
class CorrelationRow:
    x: str
    y: str
    r: float
    p: float
    p_adj: float
    n: int


@dataclass(frozen=True)
class EnrichmentResultRow:
    set_id: str
    source: str
    direction: Literal["up", "down", "two-sided"]
    method: Literal["ORA", "GSEA"]
    statistic: float
    p: float
    p_adj: float
    overlap: int = 0
    set_size: int = 0
    nes: Optional[float] = None


DA_COLUMNS = [f.name for f in fields(DAResultRow)]
DE_COLUMNS = [f.name for f in fields(DEResultRow)]
SURVIVAL_COLUMNS = [f.name for f in fields(SurvivalResult)]
CORRELATION_COLUMNS = [f.name for f in fields(CorrelationRow)]
ENRICHMENT_COLUMNS = [f.name for f in fields(EnrichmentResultRow)]


def rows_to_frame(rows: Iterable, columns: list[str]) -> pd.DataFrame:
    """Build a DataFrame with a fixed column order (empty rows keep the header)."""
    records = [asdict(r) for r in rows]
    return pd.DataFrame.from_records(records, columns=columns)
