"""Multiple-testing correction."""

from __future__ import annotations

from typing import Sequence

import numpy as np
from scipy import stats

from .errors import OutOfRange


def bh_adjust(p: Sequence[float]) -> np.ndarray:
    """
    Benjamini-Hochberg step-up adjustment, input order preserved.

    Adjusted values are monotone in the sorted order and never below the
    raw values.
    """
    values = np.asarray(p, dtype=float)
    if values.size == 0:
        return values.copy()
    if np.isnan(values).any() or (values < 0).any() or (values > 1).any():
        bad = values[np.isnan(values) | (values < 0) | (values > 1)]
        raise OutOfRange(f"p-values must lie in [0, 1], got {bad[:5].tolist()}")
    adjusted = stats.false_discovery_control(values, method="bh")
    return np.clip(np.maximum(adjusted, values), 0.0, 1.0)
