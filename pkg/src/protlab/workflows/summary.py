"""
Deterministic text digests of result tables.

The digest is a pure function of the tables: rows are ordered by p_adj then
p (most significant first, stable), numbers are printed with
statkit.format_number, and under a character budget the least significant
rows are dropped first.
"""

from __future__ import annotations

import math
from typing import Mapping, Optional

import pandas as pd

from ..statkit.tables import format_number

DEFAULT_MAX_ROWS = 10
SIGNIFICANCE_LEVEL = 0.05


def _format_cell(value) -> str:
    if value is None:
        return "NA"
    if isinstance(value, bool):
        return str(value)
    if isinstance(value, float):
        return format_number(None if math.isnan(value) else value)
    if isinstance(value, (int,)) or hasattr(value, "item"):
        try:
            item = value.item()
        except (AttributeError, ValueError):
            return str(value)
        return _format_cell(item)
    return str(value)


def order_by_significance(frame: pd.DataFrame) -> pd.DataFrame:
    keys = [c for c in ("p_adj", "p") if c in frame.columns]
    if not keys:
        return frame
    return frame.sort_values(keys, kind="mergesort", na_position="last")


def is_low_signal(tables: Mapping[str, pd.DataFrame]) -> bool:
    """True when tables carry adjusted p-values and none is below 0.05."""
    with_padj = [t for t in tables.values() if "p_adj" in t.columns]
    if not with_padj:
        return False
    return not any((pd.to_numeric(t["p_adj"], errors="coerce") < SIGNIFICANCE_LEVEL).any() for t in with_padj)


def _table_lines(name: str, frame: pd.DataFrame, max_rows: int) -> list[str]:
    lines = [f"Table {name}: {len(frame)} rows"]
    if "p_adj" in frame.columns:
        n_sig = int((pd.to_numeric(frame["p_adj"], errors="coerce") < SIGNIFICANCE_LEVEL).sum())
        lines.append(f"Rows with p_adj < {SIGNIFICANCE_LEVEL}: {n_sig}")
    ordered = order_by_significance(frame)
    shown = ordered.head(max_rows)
    for record in shown.to_dict(orient="records"):
        lines.append("- " + "; ".join(f"{k}={_format_cell(v)}" for k, v in record.items()))
    if len(ordered) > len(shown):
        lines.append(f"({len(ordered) - len(shown)} more rows not shown)")
    return lines


def summarize_tables(
    tables: Mapping[str, pd.DataFrame],
    max_rows: int = DEFAULT_MAX_ROWS,
    char_budget: Optional[int] = None,
) -> str:
    """Digest of every table in name order, shrinking rows per table to fit the budget."""
    rows = max_rows
    while True:
        text = "\n".join(
            line for name in sorted(tables) for line in _table_lines(name, tables[name], rows) + [""]
        ).rstrip("\n")
        if char_budget is None or len(text) <= char_budget or rows == 0:
            return text
        rows -= 1
