"""Workflow specs, calls, results and the execution context they share."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Any, Literal, Optional

import pandas as pd

from ..core.errors import ProtlabError

if TYPE_CHECKING:
    from ..dataset.models import Dataset
    from ..llm.client import ChatClient
    from ..services.thpa_client import ThpaClient
    from ..statkit.enrichment import GeneSetLibrary
    from .external import PluginRegistry


# =============================================================================
# Exceptions
# =============================================================================


class WorkflowError(ProtlabError):
    """Base exception for workflow errors."""

    pass


class UnknownWorkflow(WorkflowError):
    """Raised when a call names a workflow that is not registered."""

    def __init__(self, name: str):
        self.name = name
        super().__init__(f"Unknown workflow: {name!r}")


class ParamValidation(WorkflowError):
    """Raised when a call's parameters do not validate against the schema."""

    def __init__(self, param: str, message: str):
        self.param = param
        super().__init__(f"Parameter {param!r}: {message}")


class DependencyMissing(WorkflowError):
    """Raised when a workflow needs results that no earlier workflow produced."""

    pass


class WrongDataKind(WorkflowError):
    """Raised when a workflow is called on the other kind of dataset."""

    pass


class UnknownProtein(WorkflowError):
    """Raised when a requested protein is not a dataset column."""

    def __init__(self, protein: str):
        self.protein = protein
        super().__init__(f"Unknown protein: {protein!r}")


class NoPluginRegistered(WorkflowError):
    """Raised when no external-data plugin serves the requested dataset."""

    pass


class WorkflowFailed(WorkflowError):
    """A downstream error raised while a workflow ran."""

    def __init__(self, workflow: str, cause: Exception):
        self.workflow = workflow
        self.cause = cause
        super().__init__(f"Workflow {workflow!r} failed: {type(cause).__name__}: {cause}")


# =============================================================================
# Specs and calls
# =============================================================================

DataKind = Literal["single_cell", "clinical", "external"]

# field          categorical metadata field
# numeric_field  numeric metadata field
# contrasts      list of [level, level] pairs of the call's `field` (REST allowed)
# cell_type      one annotated cell type; cell_types a list of them
# proteins       dataset protein columns
# molecules      free molecule symbols (resolved by an external plugin)
# choice         one of `choices`; text free text; external_dataset a plugin dataset
ParamType = Literal[
    "field",
    "numeric_field",
    "contrasts",
    "cell_type",
    "cell_types",
    "proteins",
    "molecules",
    "choice",
    "text",
    "external_dataset",
]


@dataclass(frozen=True)
class ParamSpec:
    name: str
    type: ParamType
    description: str
    required: bool = True
    choices: tuple[str, ...] = ()

    def describe(self) -> str:
        need = "required" if self.required else "optional"
        extra = f"; one of {', '.join(self.choices)}" if self.choices else ""
        return f"- {self.name} ({self.type}, {need}{extra}): {self.description}"


@dataclass(frozen=True)
class WorkflowSpec:
    name: str
    data_kind: DataKind
    description: str
    params: tuple[ParamSpec, ...] = ()
    tool: str = ""
    mutates: bool = False

    def __post_init__(self) -> None:
        if not self.description:
            raise ValueError(f"Workflow {self.name!r} needs a description")
        names = [p.name for p in self.params]
        if len(names) != len(set(names)):
            raise ValueError(f"Workflow {self.name!r} has duplicate parameter names")

    def param(self, name: str) -> Optional[ParamSpec]:
        for p in self.params:
            if p.name == name:
                return p
        return None

    def schema_text(self) -> str:
        if not self.params:
            return "None"
        return "\n".join(p.describe() for p in self.params)


@dataclass(frozen=True)
class WorkflowCall:
    workflow: str
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"workflow": self.workflow, "params": json.loads(json.dumps(self.params, sort_keys=True))}


@dataclass
class WorkflowResult:
    workflow: str
    tables: dict[str, pd.DataFrame]
    numeric_summary: str
    interpretation: str = ""
    artifacts: list[str] = field(default_factory=list)
    dataset_delta: dict = field(default_factory=dict)
    low_signal: bool = False

    def table_csv(self, name: str) -> str:
        return self.tables[name].to_csv(index=False, lineterminator="\n")

    def digest(self) -> str:
        """SHA-256 over the numeric summary and every table's CSV form."""
        h = hashlib.sha256(self.numeric_summary.encode("utf-8"))
        for name in sorted(self.tables):
            h.update(name.encode("utf-8"))
            h.update(self.table_csv(name).encode("utf-8"))
        return h.hexdigest()

    def table_rows(self) -> list[list[str]]:
        """Every row of every table with its cells as text (used for claim tracing)."""
        rows = []
        for frame in self.tables.values():
            for row in frame.to_numpy().tolist():
                rows.append([str(value) for value in row])
        return rows

    def to_record(self) -> dict:
        return {
            "workflow": self.workflow,
            "digest": self.digest(),
            "numeric_summary": self.numeric_summary,
            "interpretation": self.interpretation,
            "artifacts": [Path(a).name for a in self.artifacts],
            "dataset_delta": self.dataset_delta,
            "low_signal": self.low_signal,
            "tables": {name: self.table_csv(name) for name in sorted(self.tables)},
        }


@dataclass
class WorkflowContext:
    """Everything a workflow body may read or update while it runs."""

    dataset: "Dataset"
    llm: "ChatClient"
    objective: str = ""
    history: str = ""
    description: str = ""
    tissue: str = "Blood"
    seed: int = 0
    retry_budget: int = 3
    artifact_dir: Optional[Path] = None
    thpa: Optional["ThpaClient"] = None
    plugins: Optional["PluginRegistry"] = None
    gene_sets: list["GeneSetLibrary"] = field(default_factory=list)
    direct_tools: bool = False
    char_budget: Optional[int] = None
    attach_images: bool = False
    # results later workflows reuse, e.g. differential expression rows
    state: dict[str, Any] = field(default_factory=dict)
    step: int = 0
