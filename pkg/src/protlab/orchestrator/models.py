"""Objectives, hypotheses, statistical claims and run configuration."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional

from ..core.config import ConfigManager
from ..core.errors import ConfigError, ProtlabError


# =============================================================================
# Exceptions
# =============================================================================


class OrchestratorError(ProtlabError):
    """Base exception for planning and pipeline errors."""

    pass


class EmptyPlan(OrchestratorError):
    """Raised when a workflow plan has no valid workflow names."""

    pass


class JournalError(OrchestratorError):
    """Raised when a journal file is unreadable or its digest does not match."""

    pass


# =============================================================================
# Data Classes
# =============================================================================

OBJECTIVE_STATUSES = ("planned", "active", "completed", "abandoned")
OBJECTIVE_ORIGINS = ("initial", "updater")

NUMERIC_CLAIM_FIELDS = ("logFC", "p", "p_adj", "r")


@dataclass
class Objective:
    id: int
    text: str
    status: str = "planned"
    origin: str = "initial"

    def __post_init__(self) -> None:
        if self.status not in OBJECTIVE_STATUSES:
            raise ValueError(f"Invalid objective status: {self.status!r}")
        if self.origin not in OBJECTIVE_ORIGINS:
            raise ValueError(f"Invalid objective origin: {self.origin!r}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class StatClaim:
    """One quoted statistical result inside a hypothesis."""

    entity: str
    comparison: str
    test: str
    logFC: Optional[float] = None
    p: Optional[float] = None
    p_adj: Optional[float] = None
    r: Optional[float] = None
    # numbers as written in the response, for string-normalized matching
    raw_values: dict = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        values = [getattr(self, name) for name in NUMERIC_CLAIM_FIELDS]
        present = [v for v in values if v is not None]
        if not present:
            raise ValueError(f"Statistical claim on {self.entity!r} carries no numbers")
        if not all(math.isfinite(v) for v in present):
            raise ValueError(f"Statistical claim on {self.entity!r} has non-finite numbers")

    def numbers(self) -> dict[str, float]:
        return {name: getattr(self, name) for name in NUMERIC_CLAIM_FIELDS if getattr(self, name) is not None}

    def to_dict(self) -> dict:
        return {
            "entity": self.entity,
            "comparison": self.comparison,
            "test": self.test,
            **{name: getattr(self, name) for name in NUMERIC_CLAIM_FIELDS},
        }


@dataclass(frozen=True)
class Hypothesis:
    overview: str
    stat_summary: tuple[StatClaim, ...]
    statement: str
    objective_id: Optional[int] = None
    untraceable: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not self.overview.strip() or not self.statement.strip() or not self.stat_summary:
            raise ValueError("Hypothesis needs an overview, statistical claims and a statement")

    @property
    def traceable(self) -> bool:
        return not self.untraceable

    def full_text(self) -> str:
        """Summary, statistics and statement as one block (used for evaluation)."""
        lines = [f"Summary: {self.overview}", "Statistical Test:"]
        for claim in self.stat_summary:
            numbers = ", ".join(f"{k}={claim.raw_values.get(k, v)}" for k, v in claim.numbers().items())
            lines.append(f"- {claim.entity} | {claim.comparison} | {claim.test} | {numbers}")
        lines.append(f"Hypothesis: {self.statement}")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {
            "objective_id": self.objective_id,
            "overview": self.overview,
            "stat_summary": [c.to_dict() for c in self.stat_summary],
            "statement": self.statement,
            "untraceable": list(self.untraceable),
        }

    @classmethod
    def from_dict(cls, data: dict) -> Hypothesis:
        claims = tuple(
            StatClaim(
                entity=c["entity"],
                comparison=c.get("comparison", ""),
                test=c.get("test", ""),
                **{name: c.get(name) for name in NUMERIC_CLAIM_FIELDS},
                raw_values={name: str(c[name]) for name in NUMERIC_CLAIM_FIELDS if c.get(name) is not None},
            )
            for c in data["stat_summary"]
        )
        return cls(
            overview=data["overview"],
            stat_summary=claims,
            statement=data["statement"],
            objective_id=data.get("objective_id"),
            untraceable=tuple(data.get("untraceable", ())),
        )


@dataclass(frozen=True)
class RunConfig:
    mode: str = "single_cell"
    max_objectives: int = 3
    hypotheses_per_objective: int = 5
    max_workflows_single_cell: int = 5
    max_workflows_clinical: int = 8
    context_token_budget: int = 12000
    clinical_direct_tools: bool = False
    tissue: str = "Blood"
    retry_budget: int = 3
    seed: int = 0

    def __post_init__(self) -> None:
        for name in (
            "max_objectives",
            "hypotheses_per_objective",
            "max_workflows_single_cell",
            "max_workflows_clinical",
            "context_token_budget",
            "retry_budget",
        ):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")

    @property
    def max_workflows_per_objective(self) -> int:
        if self.mode == "clinical":
            return self.max_workflows_clinical
        return self.max_workflows_single_cell

    @classmethod
    def from_config(cls, config: ConfigManager) -> RunConfig:
        run = config.get_run_section()
        return cls(
            mode=run["mode"],
            max_objectives=int(run["max_objectives"]),
            hypotheses_per_objective=int(run["hypotheses_per_objective"]),
            max_workflows_single_cell=int(run["max_workflows_single_cell"]),
            max_workflows_clinical=int(run["max_workflows_clinical"]),
            context_token_budget=int(run["context_token_budget"]),
            clinical_direct_tools=bool(run["clinical_direct_tools"]),
            tissue=str(run["tissue"]),
            retry_budget=int(config.get("llm", "retry_budget")),
            seed=int(run["seed"]),
        )

    def to_dict(self) -> dict:
        return asdict(self)
