"""
Plot artifacts for workflow results.

Figures are rendered with the Agg backend and written as SVG; a PNG copy is
added when the LLM transport takes image attachments.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402
from lifelines import KaplanMeierFitter  # noqa: E402

logger = logging.getLogger(__name__)


def _save(fig, path_stem: Path, png: bool) -> list[str]:
    path_stem.parent.mkdir(parents=True, exist_ok=True)
    written = []
    svg_path = path_stem.with_suffix(".svg")
    # fixed metadata keeps the SVG bytes stable across runs
    fig.savefig(svg_path, format="svg", metadata={"Date": None})
    written.append(str(svg_path))
    if png:
        png_path = path_stem.with_suffix(".png")
        fig.savefig(png_path, format="png", dpi=100)
        written.append(str(png_path))
    plt.close(fig)
    logger.debug(f"[Workflow] Wrote plot {svg_path.name}")
    return written


def plot_heatmap(frame: pd.DataFrame, path_stem: Path, title: str = "", png: bool = False) -> list[str]:
    """Rows x columns heatmap of a numeric frame (samples x proteins)."""
    fig, ax = plt.subplots(figsize=(max(4.0, 0.5 * frame.shape[1] + 2), max(3.0, 0.4 * frame.shape[0] + 1.5)))
    image = ax.imshow(frame.to_numpy(dtype=float), aspect="auto", cmap="viridis")
    ax.set_xticks(range(frame.shape[1]), [str(c) for c in frame.columns], rotation=90)
    ax.set_yticks(range(frame.shape[0]), [str(i) for i in frame.index])
    fig.colorbar(image, ax=ax, label="mean expression")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    return _save(fig, path_stem, png)


def plot_distributions(
    groups: Mapping[str, Sequence[float]],
    protein: str,
    path_stem: Path,
    png: bool = False,
) -> list[str]:
    """Box plot of one protein's values per condition."""
    names = list(groups)
    fig, ax = plt.subplots(figsize=(max(3.0, 1.2 * len(names) + 1), 3.5))
    ax.boxplot([np.asarray(groups[n], dtype=float) for n in names])
    ax.set_xticks(range(1, len(names) + 1), names)
    ax.set_ylabel(protein)
    ax.set_title(f"{protein} by condition")
    fig.tight_layout()
    return _save(fig, path_stem, png)


def plot_kaplan_meier(
    time: Sequence[float],
    event: Sequence[int],
    high: Sequence[bool],
    molecule: str,
    path_stem: Path,
    png: bool = False,
) -> list[str]:
    """Kaplan-Meier curves of the high and low expression groups."""
    time = np.asarray(time, dtype=float)
    event = np.asarray(event, dtype=int)
    high = np.asarray(high, dtype=bool)
    fig, ax = plt.subplots(figsize=(4.5, 3.5))
    for mask, label in ((high, f"{molecule} high"), (~high, f"{molecule} low")):
        if mask.sum() == 0:
            continue
        kmf = KaplanMeierFitter()
        kmf.fit(time[mask], event_observed=event[mask], label=label)
        kmf.plot_survival_function(ax=ax, ci_show=False)
    ax.set_xlabel("time")
    ax.set_ylabel("survival probability")
    fig.tight_layout()
    return _save(fig, path_stem, png)
