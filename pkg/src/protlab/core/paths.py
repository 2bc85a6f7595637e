"""
Centralized path management for protlab.

Every file a run writes (journal, reports, artifacts, logs, recordings)
resolves beneath one output directory. Bundled read-only resources (gene
sets, plugin manifest) resolve against the project root.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Optional

logger = logging.getLogger(__name__)

# Navigate from paths.py: core -> protlab -> src -> project_root
_BUNDLE_DIR = Path(__file__).resolve().parent.parent.parent.parent


class PathManager:
    """
    Manages all file paths for a run.

    Usage:
        paths = PathManager(Path("runs/pbmc"))
        paths.get_journal_path()        # runs/pbmc/journal.json
        paths.get_artifact_dir()        # runs/pbmc/artifacts
    """

    def __init__(self, out_dir: Path):
        self._out_dir = Path(out_dir)
        self._ensure_directories()

    def _ensure_directories(self) -> None:
        """Create the output tree on first use."""
        for sub in ("artifacts", "tables", "logs", "reports", "recordings"):
            (self._out_dir / sub).mkdir(parents=True, exist_ok=True)

    # =========================================================================
    # Public API: Bundled Resources (read-only)
    # =========================================================================

    @staticmethod
    def get_bundled_resource(relative_path: str) -> Optional[Path]:
        """
        Get path to a bundled resource file.

        Args:
            relative_path: Path relative to the project root (e.g. "data/gene_sets/hallmark.gmt")

        Returns:
            Absolute path to the resource, or None if not found.
        """
        resource_path = _BUNDLE_DIR / relative_path
        return resource_path if resource_path.exists() else None

    @staticmethod
    def get_bundled_gene_sets() -> list[Path]:
        """Get every bundled GMT file, sorted by name."""
        gene_set_dir = _BUNDLE_DIR / "data" / "gene_sets"
        if not gene_set_dir.is_dir():
            return []
        return sorted(gene_set_dir.glob("*.gmt"))

    # =========================================================================
    # Public API: Run Outputs
    # =========================================================================

    def get_out_dir(self) -> Path:
        """Get the root output directory."""
        return self._out_dir

    def get_journal_path(self) -> Path:
        """Get path to the run journal."""
        return self._out_dir / "journal.json"

    def get_config_snapshot_path(self) -> Path:
        """Get path to the effective config written at run start."""
        return self._out_dir / "config.json"

    def get_artifact_dir(self) -> Path:
        """Get directory for plot artifacts (SVG + source CSV)."""
        return self._out_dir / "artifacts"

    def get_table_dir(self) -> Path:
        """Get directory for workflow result tables."""
        return self._out_dir / "tables"

    def get_report_path(self, filename: str) -> Path:
        """Get path for a Markdown/CSV report file."""
        return self._out_dir / "reports" / filename

    def get_log_dir(self) -> Path:
        """Get path to log directory."""
        return self._out_dir / "logs"

    def get_default_recordings_path(self) -> Path:
        """Get the default LLM recording store (JSONL)."""
        return self._out_dir / "recordings" / "llm.jsonl"

    def get_http_recordings_dir(self) -> Path:
        """Get the default HTTP recordings directory."""
        return self._out_dir / "recordings" / "http"

    def get_dataset_dir(self) -> Path:
        """Get the directory the final dataset state is persisted to."""
        return self._out_dir / "dataset"

    def contains(self, path: Path) -> bool:
        """True when path resolves inside the output directory."""
        try:
            Path(path).resolve().relative_to(self._out_dir.resolve())
            return True
        except ValueError:
            return False
