"""
Append-only run journal.

Events are stored in canonical JSON form (sorted keys, no timestamps) so the
SHA-256 digest over config snapshot, data description and events is a pure
function of what the run did.
"""

from __future__ import annotations

import hashlib
import json
import logging
import threading
from pathlib import Path
from typing import Any, Optional

from .models import JournalError

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1


def canonical_json(value: Any) -> str:
    return json.dumps(value, sort_keys=True, separators=(",", ":"), ensure_ascii=False, default=str)


def _canonicalize(value: Any) -> Any:
    return json.loads(canonical_json(value))


class RunJournal:
    def __init__(self, config_snapshot: Optional[dict] = None, description: Optional[dict] = None):
        self.config_snapshot = _canonicalize(config_snapshot or {})
        self.description = _canonicalize(description) if description is not None else None
        self._events: list[dict] = []
        self._lock = threading.Lock()

    # =========================================================================
    # Recording
    # =========================================================================

    def record(self, kind: str, **payload) -> dict:
        """Append an event; returns its canonical form."""
        if not kind:
            raise JournalError("Event kind must be nonempty")
        with self._lock:
            event = _canonicalize({"seq": len(self._events), "kind": kind, **payload})
            self._events.append(event)
        logger.debug(f"[Pipeline] Journal event {event['seq']}: {kind}")
        return event

    def scoped(self, objective_id: int) -> ScopedJournal:
        """A sink that tags every event with an objective id."""
        return ScopedJournal(self, objective_id)

    def set_description(self, description: dict) -> None:
        if self.description is not None:
            raise JournalError("The data description is already recorded")
        self.description = _canonicalize(description)

    # =========================================================================
    # Queries
    # =========================================================================

    @property
    def events(self) -> list[dict]:
        return [dict(e) for e in self._events]

    def events_of(self, *kinds: str) -> list[dict]:
        return [dict(e) for e in self._events if e["kind"] in kinds]

    def activated_objectives(self) -> list[int]:
        return [e["objective"]["id"] for e in self._events if e["kind"] == "objective_activated"]

    def executed_per_objective(self) -> dict[int, int]:
        counts: dict[int, int] = {}
        for e in self._events:
            if e["kind"] in ("workflow_executed", "workflow_failed") and "objective_id" in e:
                counts[e["objective_id"]] = counts.get(e["objective_id"], 0) + 1
        return counts

    def __len__(self) -> int:
        return len(self._events)

    # =========================================================================
    # Digest and persistence
    # =========================================================================

    def _body(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "config": self.config_snapshot,
            "description": self.description,
            "events": self._events,
        }

    def digest(self) -> str:
        return hashlib.sha256(canonical_json(self._body()).encode("utf-8")).hexdigest()

    def to_dict(self) -> dict:
        return {**self._body(), "digest": self.digest()}

    def save(self, path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True, ensure_ascii=False)
        logger.info(f"[Pipeline] Journal saved to {path} ({len(self)} events)")
        return path

    @classmethod
    def from_dict(cls, data: dict, verify: bool = True) -> RunJournal:
        if data.get("schema_version") != SCHEMA_VERSION:
            raise JournalError(f"Unsupported journal schema version: {data.get('schema_version')!r}")
        journal = cls(data.get("config"), data.get("description"))
        for i, event in enumerate(data.get("events", [])):
            if event.get("seq") != i:
                raise JournalError(f"Journal event {i} is out of order")
            journal._events.append(_canonicalize(event))
        if verify and data.get("digest") != journal.digest():
            raise JournalError("Journal digest does not match its content")
        return journal

    @classmethod
    def load(cls, path: Path, verify: bool = True) -> RunJournal:
        path = Path(path)
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise JournalError(f"Cannot read journal {path}: {e}")
        return cls.from_dict(data, verify=verify)


class ScopedJournal:
    def __init__(self, journal: RunJournal, objective_id: int):
        self.journal = journal
        self.objective_id = objective_id

    def record(self, kind: str, **payload) -> dict:
        return self.journal.record(kind, objective_id=self.objective_id, **payload)
