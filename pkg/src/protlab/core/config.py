"""
Centralized configuration management for protlab.

Provides a single source of truth for run, model, HTTP and evaluation
settings. Values come from the built-in defaults, optionally overlaid by a
JSON config file, then by command-line overrides (flags > file > defaults).
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any, Optional

from .errors import ConfigError

logger = logging.getLogger(__name__)


VALID_MODES = ("single_cell", "clinical")
VALID_TRANSPORTS = ("live", "replay", "record")


class ConfigManager:
    """
    Manages all run configuration.

    Loaded from an optional JSON file and merged over DEFAULTS so every key
    always exists. Command-line flags are applied with apply_overrides().
    """

    # Default configuration values
    DEFAULTS = {
        "version": "1.0",
        "run": {
            "mode": "single_cell",
            "max_objectives": 3,
            "hypotheses_per_objective": 5,
            "max_workflows_single_cell": 5,
            "max_workflows_clinical": 8,
            "context_token_budget": 12000,
            "clinical_direct_tools": False,
            "tissue": "Blood",
            "knn_k": 5,
            "arcsinh_transform": False,
            "sample_field": "",
            "survival_time_field": "",
            "event_field": "",
            "seed": 0,
        },
        "llm": {
            "provider": "openai",
            "model": "gpt-4o",
            "base_url": "",
            "temperature": 0.0,
            "max_tokens": 2048,
            "seed": 0,
            "retry_budget": 3,
            "max_in_flight": 4,
            "requests_per_second": 2.0,
            "transport": "replay",
            "recordings": "",
            "step_models": {},
        },
        "http": {
            "offline": False,
            "timeout": 30.0,
            "recordings_dir": "",
        },
        "evaluation": {
            "evaluators": [],
            "pubmed_limit": 15,
            "chunk_words": 1000,
            "chunk_overlap": 200,
        },
        "paths": {
            "out_dir": "protlab_out",
            "gene_sets": [],
            "plugin_manifest": "",
        },
    }

    def __init__(self, config_path: Optional[Path] = None):
        """
        Initialize the config manager.

        Args:
            config_path: Optional JSON config file. Missing keys fall back to
                DEFAULTS; unknown keys are ignored.
        """
        self._config_path = Path(config_path) if config_path else None
        self._config = self._load_config()

    def _load_config(self) -> dict:
        """Load configuration from JSON file, merging with defaults."""
        if self._config_path is None:
            return self._deep_copy(self.DEFAULTS)

        if not self._config_path.exists():
            raise ConfigError(f"Config file not found: {self._config_path}")

        try:
            with open(self._config_path, "r", encoding="utf-8") as f:
                loaded = json.load(f)
        except (json.JSONDecodeError, OSError) as e:
            raise ConfigError(f"Invalid config file {self._config_path}: {e}")

        if not isinstance(loaded, dict):
            raise ConfigError(f"Config file {self._config_path} must hold a JSON object")

        logger.info(f"[Config] Loaded {self._config_path}")
        return self._merge_with_defaults(loaded)

    def _deep_copy(self, d: dict) -> dict:
        """Create a deep copy of a dictionary."""
        return json.loads(json.dumps(d))

    def _merge_with_defaults(self, loaded: dict) -> dict:
        """Merge loaded config with defaults, preserving loaded values."""
        result = self._deep_copy(self.DEFAULTS)

        for key, value in loaded.items():
            if key in result:
                if isinstance(value, dict) and isinstance(result[key], dict):
                    # Merge nested dicts
                    for sub_key, sub_value in value.items():
                        if sub_key in result[key]:
                            result[key][sub_key] = sub_value
                else:
                    result[key] = value

        return result

    def get_config_path(self) -> Optional[Path]:
        """Get the path of the loaded config file, if any."""
        return self._config_path

    def get(self, section: str, key: str) -> Any:
        """Get a single value, e.g. get("run", "max_objectives")."""
        try:
            return self._config[section][key]
        except KeyError:
            raise ConfigError(f"Unknown config key: {section}.{key}")

    def set(self, section: str, key: str, value: Any) -> None:
        """Set a single value. Unknown keys are rejected."""
        if section not in self._config or key not in self._config[section]:
            raise ConfigError(f"Unknown config key: {section}.{key}")
        self._config[section][key] = value

    def apply_overrides(self, overrides: dict[str, Any]) -> None:
        """
        Apply dotted-key overrides (e.g. {"run.max_objectives": 1}).

        None values are skipped so unset CLI flags never clobber the file.
        """
        for dotted, value in overrides.items():
            if value is None:
                continue
            section, _, key = dotted.partition(".")
            self.set(section, key, value)
        self.validate()

    def validate(self) -> None:
        """Check invariants the rest of the package relies on."""
        run = self._config["run"]
        if run["mode"] not in VALID_MODES:
            raise ConfigError(f"run.mode must be one of {VALID_MODES}, got {run['mode']!r}")
        for key in (
            "max_objectives",
            "hypotheses_per_objective",
            "max_workflows_single_cell",
            "max_workflows_clinical",
            "context_token_budget",
            "knn_k",
        ):
            if int(run[key]) < 1:
                raise ConfigError(f"run.{key} must be positive, got {run[key]}")

        llm = self._config["llm"]
        if llm["transport"] not in VALID_TRANSPORTS:
            raise ConfigError(
                f"llm.transport must be one of {VALID_TRANSPORTS}, got {llm['transport']!r}"
            )
        if int(llm["retry_budget"]) < 1:
            raise ConfigError("llm.retry_budget must be at least 1")

    # =========================================================================
    # Section accessors
    # =========================================================================

    def get_run_section(self) -> dict:
        """Get a copy of the run section."""
        return self._deep_copy(self._config["run"])

    def get_llm_section(self) -> dict:
        """Get a copy of the llm section."""
        return self._deep_copy(self._config["llm"])

    def get_http_section(self) -> dict:
        """Get a copy of the http section."""
        return self._deep_copy(self._config["http"])

    def get_evaluation_section(self) -> dict:
        """Get a copy of the evaluation section."""
        return self._deep_copy(self._config["evaluation"])

    def get_out_dir(self) -> Path:
        """Get the output directory every run writes beneath."""
        return Path(self._config["paths"]["out_dir"])

    def get_gene_set_paths(self) -> list[Path]:
        """Get user-configured GMT files (bundled sets are always added)."""
        return [Path(p) for p in self._config["paths"]["gene_sets"]]

    def get_plugin_manifest(self) -> Optional[Path]:
        """Get the external plugin manifest path, if configured."""
        value = self._config["paths"]["plugin_manifest"]
        return Path(value) if value else None

    # =========================================================================
    # Bulk Operations
    # =========================================================================

    def save(self, path: Path) -> None:
        """Write the effective configuration to a JSON file."""
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self._config, f, indent=2, sort_keys=True)

    def get_all(self) -> dict:
        """Get a copy of all configuration values."""
        return self._deep_copy(self._config)
