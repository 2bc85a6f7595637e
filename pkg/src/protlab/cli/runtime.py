"""
Builds the objects a command needs from the effective configuration:
dataset, chat client, HTTP clients, gene sets and external-data plugins.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from ..core.config import ConfigManager
from ..core.errors import ConfigError, UsageError
from ..core.paths import PathManager
from ..dataset.io import EXPRESSION_NAME, MANIFEST_NAME, METADATA_NAME, load_clinical, load_dataset, load_single_cell
from ..dataset.models import Dataset
from ..dataset.synthetic import BUILTIN_DATASETS
from ..llm.client import (
    ChatClient,
    LiveTransport,
    ModelParams,
    RecordingStore,
    RecordingTransport,
    ReplayTransport,
)
from ..orchestrator.models import RunConfig
from ..services.http_cache import RecordedHttpClient
from ..services.pubmed_client import PubMedClient
from ..services.thpa_client import ThpaClient
from ..statkit.enrichment import GeneSetLibrary, read_gmt
from ..workflows.external import PluginRegistry

logger = logging.getLogger(__name__)

BUILTIN_KINDS = {"toy-pbmc": "single_cell", "toy-cohort": "clinical"}


@dataclass
class Runtime:
    config: ConfigManager
    paths: PathManager
    run_config: RunConfig
    params: ModelParams
    llm: ChatClient
    http: RecordedHttpClient

    def snapshot(self) -> dict:
        """The settings a journal digest depends on (no paths, no secrets)."""
        return {
            "run": self.run_config.to_dict(),
            "llm": self.params.canonical(),
            "step_models": dict(sorted(self.llm.step_models.items())),
        }


# =============================================================================
# Datasets
# =============================================================================


def builtin_kind(spec: str) -> Optional[str]:
    return BUILTIN_KINDS.get(spec)


def resolve_dataset(spec: str, mode: str, config: ConfigManager, paths: PathManager) -> Dataset:
    """
    Load --dataset: a built-in fixture name, "expr.csv,meta.csv", or a directory
    (saved dataset, or one holding expression.csv and metadata.csv).

    Raises:
        UsageError, DatasetError, OSError
    """
    run = config.get_run_section()
    if spec in BUILTIN_DATASETS:
        if BUILTIN_KINDS[spec] != mode:
            raise UsageError(f"Built-in dataset {spec} is {BUILTIN_KINDS[spec]} data; --mode is {mode}")
        directory = paths.get_out_dir() / "inputs" / spec
        if spec == "toy-cohort":
            return BUILTIN_DATASETS[spec](directory, seed=int(run["seed"]), knn_k=int(run["knn_k"]))
        return BUILTIN_DATASETS[spec](directory, seed=int(run["seed"]))

    if "," in spec:
        expr_text, _, meta_text = spec.partition(",")
        expr_path, meta_path = Path(expr_text.strip()), Path(meta_text.strip())
    else:
        directory = Path(spec)
        if not directory.is_dir():
            raise UsageError(f"--dataset must be a built-in name, a directory or 'expr.csv,meta.csv': {spec}")
        if (directory / MANIFEST_NAME).is_file():
            dataset = load_dataset(directory)
            if dataset.kind != mode:
                raise UsageError(f"Saved dataset in {directory} is {dataset.kind} data; --mode is {mode}")
            return dataset
        expr_path, meta_path = directory / EXPRESSION_NAME, directory / METADATA_NAME

    if mode == "single_cell":
        return load_single_cell(
            expr_path,
            meta_path,
            arcsinh=bool(run["arcsinh_transform"]),
            sample_field=run["sample_field"] or None,
        )
    return load_clinical(
        expr_path,
        meta_path,
        knn_k=int(run["knn_k"]),
        survival_time_field=run["survival_time_field"] or None,
        event_field=run["event_field"] or None,
    )


# =============================================================================
# Clients
# =============================================================================


def model_params(config: ConfigManager, images: bool = False) -> ModelParams:
    llm = config.get_llm_section()
    return ModelParams(
        model=str(llm["model"]),
        provider=str(llm["provider"]),
        temperature=float(llm["temperature"]),
        max_tokens=int(llm["max_tokens"]),
        seed=None if llm["seed"] is None else int(llm["seed"]),
        base_url=str(llm["base_url"]),
        images=images,
    )


def recordings_path(config: ConfigManager, paths: PathManager) -> Path:
    configured = config.get("llm", "recordings")
    return Path(configured) if configured else paths.get_default_recordings_path()


def build_chat_client(config: ConfigManager, paths: PathManager, params: ModelParams) -> ChatClient:
    """
    Chat client over the configured transport.

    Raises:
        ConfigError (replay without a recordings file), UsageError (record outside the output directory)
    """
    llm = config.get_llm_section()
    transport_name = llm["transport"]
    path = recordings_path(config, paths)

    if transport_name == "replay":
        if not path.is_file():
            raise ConfigError(f"Replay transport needs an existing recordings file: {path}")
        transport = ReplayTransport(RecordingStore(path))
    elif transport_name == "record":
        if not paths.contains(path):
            raise UsageError(f"Recordings are written inside the output directory; {path} is outside it")
        transport = RecordingTransport(LiveTransport(), RecordingStore(path))
    else:
        transport = LiveTransport()

    logger.info(f"[LLM] Transport {transport_name} ({params.provider}/{params.model})")
    return ChatClient(
        transport,
        params,
        step_models=llm["step_models"],
        max_in_flight=int(llm["max_in_flight"]),
        requests_per_second=float(llm["requests_per_second"]),
    )


def build_http(config: ConfigManager, paths: PathManager) -> RecordedHttpClient:
    """Recorded HTTP client; offline under replay so no request leaves the process."""
    http = config.get_http_section()
    offline = bool(http["offline"]) or config.get("llm", "transport") == "replay"
    configured = http["recordings_dir"]
    if configured and (offline or paths.contains(Path(configured))):
        recordings = Path(configured)
    else:
        recordings = paths.get_http_recordings_dir()
    return RecordedHttpClient(recordings, offline=offline, timeout=float(http["timeout"]))


def build_runtime(config: ConfigManager, images: bool = False) -> Runtime:
    paths = PathManager(config.get_out_dir())
    params = model_params(config, images=images)
    return Runtime(
        config=config,
        paths=paths,
        run_config=RunConfig.from_config(config),
        params=params,
        llm=build_chat_client(config, paths, params),
        http=build_http(config, paths),
    )


def thpa_client(runtime: Runtime) -> ThpaClient:
    return ThpaClient(runtime.http)


def pubmed_client(runtime: Runtime) -> PubMedClient:
    return PubMedClient(runtime.http)


# =============================================================================
# Resources
# =============================================================================


def load_gene_sets(config: ConfigManager) -> list[GeneSetLibrary]:
    """Bundled GMT files plus configured ones, each tagged by file stem."""
    files = PathManager.get_bundled_gene_sets() + config.get_gene_set_paths()
    libraries = [read_gmt(path) for path in files]
    logger.info(f"[Config] {len(libraries)} gene-set libraries: {', '.join(lib.source for lib in libraries)}")
    return libraries


def load_plugins(config: ConfigManager, paths: PathManager) -> Optional[PluginRegistry]:
    manifest = config.get_plugin_manifest() or PathManager.get_bundled_resource("data/plugins/manifest.json")
    if manifest is None:
        return None
    return PluginRegistry.from_manifest(
        manifest, knn_k=int(config.get("run", "knn_k")), work_dir=paths.get_out_dir() / "inputs" / "plugins"
    )
