"""
External-data workflows.

External Correlation and External Survival delegate to a plugin that serves
named reference cohorts. The bundled LocalCsvCohortPlugin reads cohorts from
CSV pairs (or generates the synthetic one); other plugins are loaded from a
JSON manifest by "module:callable" factory. THPA looks a protein up in The
Human Protein Atlas.
"""

from __future__ import annotations

import importlib
import json
import logging
import tempfile
from pathlib import Path
from typing import Any, Mapping, Optional, Protocol, Sequence, runtime_checkable

import pandas as pd

from ..dataset.io import load_clinical
from ..dataset.models import ClinicalCohort
from ..dataset.synthetic import BUILTIN_DATASETS
from ..statkit import rows_to_frame
from ..statkit.tables import CORRELATION_COLUMNS, SURVIVAL_COLUMNS, CorrelationRow, SurvivalResult
from .clinical import correlation_rows, survival_rows
from .common import build_result, pick_one
from .models import DependencyMissing, NoPluginRegistered, UnknownProtein, WorkflowContext, WorkflowError, WorkflowResult

logger = logging.getLogger(__name__)


# =============================================================================
# Plugin contract
# =============================================================================


@runtime_checkable
class ExternalDataPlugin(Protocol):
    def datasets(self) -> list[str]: ...

    def correlation(self, dataset: str, molecules_x: Sequence[str], molecules_y: Sequence[str]) -> list[CorrelationRow]: ...

    def survival(self, dataset: str, molecules: Sequence[str], method: str = "continuous") -> list[SurvivalResult]: ...


class LocalCsvCohortPlugin:
    """
    Reference cohorts from local files.

    Each source is either {"expression": path, "metadata": path,
    "survival_time_field": ..., "event_field": ...} or
    {"synthetic": "toy-cohort", "seed": N}. Cohorts load on first use;
    synthetic ones are written under work_dir (a temporary directory if unset).
    """

    def __init__(self, sources: Mapping[str, Mapping[str, Any]], knn_k: int = 5, work_dir: Optional[Path] = None):
        self.sources = {name: dict(spec) for name, spec in sources.items()}
        self.knn_k = knn_k
        self.work_dir = Path(work_dir) if work_dir else None
        self._cohorts: dict[str, ClinicalCohort] = {}

    def _build_synthetic(self, dataset: str, spec: Mapping[str, Any]) -> ClinicalCohort:
        builder = BUILTIN_DATASETS[spec["synthetic"]]
        kwargs = {"seed": int(spec.get("seed", 0))}
        if spec["synthetic"] == "toy-cohort":
            kwargs["knn_k"] = self.knn_k
        if self.work_dir is not None:
            return builder(self.work_dir / dataset, **kwargs)
        with tempfile.TemporaryDirectory() as tmp:
            return builder(Path(tmp), **kwargs)

    def datasets(self) -> list[str]:
        return sorted(self.sources)

    def cohort(self, dataset: str) -> ClinicalCohort:
        if dataset not in self.sources:
            raise NoPluginRegistered(f"No reference cohort named {dataset!r}")
        if dataset not in self._cohorts:
            spec = self.sources[dataset]
            if "synthetic" in spec:
                self._cohorts[dataset] = self._build_synthetic(dataset, spec)
            else:
                self._cohorts[dataset] = load_clinical(
                    Path(spec["expression"]),
                    Path(spec["metadata"]),
                    knn_k=self.knn_k,
                    survival_time_field=spec.get("survival_time_field"),
                    event_field=spec.get("event_field"),
                )
            logger.info(f"[Workflow] Loaded reference cohort {dataset!r}")
        return self._cohorts[dataset]

    def _columns(self, cohort: ClinicalCohort, molecules: Sequence[str]) -> dict:
        for molecule in molecules:
            if molecule not in cohort.proteins:
                raise UnknownProtein(molecule)
        return {m: cohort.matrix.column(m) for m in molecules}

    def correlation(self, dataset: str, molecules_x: Sequence[str], molecules_y: Sequence[str]) -> list[CorrelationRow]:
        cohort = self.cohort(dataset)
        return correlation_rows(self._columns(cohort, molecules_x), self._columns(cohort, molecules_y))

    def survival(self, dataset: str, molecules: Sequence[str], method: str = "continuous") -> list[SurvivalResult]:
        cohort = self.cohort(dataset)
        if not cohort.survival_time_field or not cohort.event_field:
            raise WorkflowError(f"Reference cohort {dataset!r} has no survival fields")
        clinical = cohort.clinical
        time = pd.to_numeric(clinical.column(cohort.survival_time_field), errors="coerce").to_numpy(dtype=float)
        event = pd.to_numeric(clinical.column(cohort.event_field), errors="coerce").to_numpy(dtype=float)
        results, _ = survival_rows(self._columns(cohort, molecules), time, event, method)
        return results


# =============================================================================
# Registry
# =============================================================================


class PluginRegistry:
    def __init__(self, plugins: Sequence[ExternalDataPlugin] = ()):
        self._plugins: list[ExternalDataPlugin] = []
        for plugin in plugins:
            self.register(plugin)

    def register(self, plugin: ExternalDataPlugin) -> None:
        if not isinstance(plugin, ExternalDataPlugin):
            raise TypeError(f"{type(plugin).__name__} does not implement the external-data plugin contract")
        self._plugins.append(plugin)

    def datasets(self) -> list[str]:
        return sorted({name for plugin in self._plugins for name in plugin.datasets()})

    def get(self, dataset: str) -> ExternalDataPlugin:
        for plugin in self._plugins:
            if dataset in plugin.datasets():
                return plugin
        raise NoPluginRegistered(
            f"No external-data plugin serves {dataset!r} (available: {self.datasets() or 'none'})"
        )

    def __len__(self) -> int:
        return len(self._plugins)

    @classmethod
    def from_manifest(cls, path: Path, knn_k: int = 5, work_dir: Optional[Path] = None) -> PluginRegistry:
        """
        Build a registry from a JSON manifest.

        {"plugins": [{"type": "local_csv", "datasets": {name: source}},
                     {"type": "factory", "factory": "module:callable"}]}

        Relative CSV paths resolve against the manifest's directory.
        """
        path = Path(path)
        with open(path, "r", encoding="utf-8") as f:
            manifest = json.load(f)

        registry = cls()
        for entry in manifest.get("plugins", []):
            kind = entry.get("type")
            if kind == "local_csv":
                sources = {}
                for name, source in entry.get("datasets", {}).items():
                    source = dict(source)
                    for key in ("expression", "metadata"):
                        if key in source and not Path(source[key]).is_absolute():
                            source[key] = str(path.parent / source[key])
                    sources[name] = source
                registry.register(LocalCsvCohortPlugin(sources, knn_k=knn_k, work_dir=work_dir))
            elif kind == "factory":
                module_name, _, attr = entry["factory"].partition(":")
                factory = getattr(importlib.import_module(module_name), attr)
                registry.register(factory(**entry.get("options", {})))
            else:
                raise WorkflowError(f"Unknown plugin type {kind!r} in {path.name}")
        logger.info(f"[Workflow] {len(registry)} external-data plugins from {path.name}")
        return registry


def _require_plugins(ctx: WorkflowContext) -> PluginRegistry:
    if ctx.plugins is None:
        raise NoPluginRegistered("No external-data plugins are registered")
    return ctx.plugins


# =============================================================================
# Workflow bodies
# =============================================================================


def external_correlation(ctx: WorkflowContext, params: dict) -> WorkflowResult:
    dataset = params["dataset_name"]
    plugin = _require_plugins(ctx).get(dataset)
    rows = plugin.correlation(dataset, params["molecules_x"], params["molecules_y"])
    frame = rows_to_frame(rows, CORRELATION_COLUMNS)
    frame.insert(0, "dataset", dataset)
    return build_result(ctx, "External Correlation", {"correlation": frame})


def external_survival(ctx: WorkflowContext, params: dict) -> WorkflowResult:
    dataset = params["dataset_name"]
    plugin = _require_plugins(ctx).get(dataset)
    method = params.get("analysis_type") or "continuous"
    rows = plugin.survival(dataset, params["molecules"], method)
    frame = rows_to_frame(rows, SURVIVAL_COLUMNS)
    frame.insert(0, "dataset", dataset)
    return build_result(ctx, "External Survival", {"survival": frame})


def thpa(ctx: WorkflowContext, params: dict) -> WorkflowResult:
    if ctx.thpa is None:
        raise DependencyMissing("No Human Protein Atlas client is configured")
    protein: Optional[str] = params.get("protein")
    if not protein:
        proteins = list(ctx.dataset.proteins)
        protein = pick_one(
            ctx,
            "select_thpa_protein",
            {
                "objective": ctx.objective,
                "history": ctx.history or "No analyses yet.",
                "proteins": ", ".join(proteins),
            },
            "Protein",
            proteins,
        )
    entry = ctx.thpa.lookup(protein)
    table = pd.DataFrame(
        [{"section": title, "values": "; ".join(values)} for title, values in entry.sections().items()],
        columns=["section", "values"],
    )
    return build_result(
        ctx, "THPA", {"thpa": table}, dataset_delta={}, interpretation=entry.to_text()
    )
