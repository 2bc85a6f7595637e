"""
Hypothesis traceability: every number a claim quotes must appear in a
result table of the same objective.

A quoted number matches a table cell when the two differ by at most 1e-6,
or when the cell rounded to the quoted precision gives the quoted number
(so "0.0413" traces to 0.041301 and "3.2e-08" to 3.2147e-08).

When some table rows name the claim's entity in a text cell, its numbers
must trace within those rows; otherwise every cell of the objective's
tables is searched.
"""

from __future__ import annotations

import logging
import math
from dataclasses import replace
from typing import Iterable, Optional, Sequence

from .models import Hypothesis, StatClaim

logger = logging.getLogger(__name__)

TOLERANCE = 1e-6
# quoted values with fewer decimals than this are matched by tolerance only
MIN_ROUNDED_DECIMALS = 2


def numeric_cells(cells: Iterable[object]) -> list[float]:
    """Finite floats among table cells; non-numeric cells are ignored."""
    values = []
    for cell in cells:
        try:
            value = float(str(cell).strip())
        except ValueError:
            continue
        if math.isfinite(value):
            values.append(value)
    return values


def _rounded_match(raw: str, quoted: float, cell: float) -> bool:
    text = raw.strip().lower().lstrip("+")
    if "e" in text:
        mantissa = text.split("e", 1)[0]
        digits = len(mantissa.split(".", 1)[1]) if "." in mantissa else 0
        return float(f"{cell:.{digits}e}") == float(f"{quoted:.{digits}e}")
    if "." not in text:
        return False
    decimals = len(text.split(".", 1)[1])
    if decimals < MIN_ROUNDED_DECIMALS:
        return False
    return round(cell, decimals) == round(quoted, decimals)


def number_traces(raw: str, quoted: float, cells: Sequence[float]) -> bool:
    for cell in cells:
        if abs(cell - quoted) <= TOLERANCE or _rounded_match(raw, quoted, cell):
            return True
    return False


def untraceable_values(claim: StatClaim, cells: Sequence[float]) -> list[str]:
    """`entity key=value` for each quoted number not found among the cells."""
    missing = []
    for key, value in claim.numbers().items():
        raw = claim.raw_values.get(key, repr(value))
        if not number_traces(raw, value, cells):
            missing.append(f"{claim.entity} {key}={raw}")
    return missing


def _normalize(text: str) -> str:
    return " ".join(text.lower().split())


def entity_cells(entity: str, rows: Iterable[Sequence[object]]) -> list[float]:
    """Numeric cells of the rows that name entity in one of their text cells."""
    wanted = _normalize(entity)
    cells: list[float] = []
    for row in rows:
        if any(_normalize(str(cell)) == wanted for cell in row):
            cells.extend(numeric_cells(row))
    return cells


def check_hypothesis(
    hypothesis: Hypothesis,
    cells: Sequence[float],
    rows: Optional[Sequence[Sequence[object]]] = None,
) -> Hypothesis:
    """Return the hypothesis with its untraceable claim values recorded."""
    missing = []
    for claim in hypothesis.stat_summary:
        scoped = entity_cells(claim.entity, rows) if rows else []
        missing.extend(untraceable_values(claim, scoped or cells))
    if missing:
        logger.warning(f"[Pipeline] Untraceable statistics in hypothesis: {missing}")
    return replace(hypothesis, untraceable=tuple(missing))
