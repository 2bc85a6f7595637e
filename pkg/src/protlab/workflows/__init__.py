"""The analysis workflow catalog and its dispatcher."""

from .executor import execute
from .external import ExternalDataPlugin, LocalCsvCohortPlugin, PluginRegistry
from .models import (
    DependencyMissing,
    NoPluginRegistered,
    ParamSpec,
    ParamValidation,
    UnknownProtein,
    UnknownWorkflow,
    WorkflowCall,
    WorkflowContext,
    WorkflowError,
    WorkflowFailed,
    WorkflowResult,
    WorkflowSpec,
    WrongDataKind,
)
from .registry import WORKFLOW_SPECS, WorkflowRegistry, validate_call
from .summary import summarize_tables

__all__ = [
    "WORKFLOW_SPECS",
    "DependencyMissing",
    "ExternalDataPlugin",
    "LocalCsvCohortPlugin",
    "NoPluginRegistered",
    "ParamSpec",
    "ParamValidation",
    "PluginRegistry",
    "UnknownProtein",
    "UnknownWorkflow",
    "WorkflowCall",
    "WorkflowContext",
    "WorkflowError",
    "WorkflowFailed",
    "WorkflowRegistry",
    "WorkflowResult",
    "WorkflowSpec",
    "WrongDataKind",
    "execute",
    "summarize_tables",
    "validate_call",
]
