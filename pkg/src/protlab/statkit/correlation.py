"""Pearson correlation with its two-sided t-distribution p-value."""

from __future__ import annotations

from typing import Sequence

import numpy as np
from scipy import stats

from .errors import LengthMismatch, TooShort, ZeroVariance


def pearson(x: Sequence[float], y: Sequence[float]) -> tuple[float, float]:
    """
    Pearson r and two-sided p (t = r * sqrt((n - 2) / (1 - r^2)), n - 2 df).

    Raises:
        LengthMismatch, TooShort (n < 3), ZeroVariance
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise LengthMismatch(f"Vectors differ in length: {x.size} vs {y.size}")
    if x.size < 3:
        raise TooShort(f"Need at least 3 paired values, got {x.size}")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise ZeroVariance("Correlation undefined for a constant vector")

    result = stats.pearsonr(x, y)
    r = float(np.clip(result.statistic, -1.0, 1.0))
    p = float(np.clip(result.pvalue, 0.0, 1.0))
    return r, p
