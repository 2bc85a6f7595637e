"""Tests for the workflow catalog, parameter validation, dispatch and workflow bodies."""

from pathlib import Path

import httpx
import numpy as np
import pandas as pd
import pytest
from sklearn.metrics import adjusted_rand_score

from conftest import DATA_DIR, prompt_list, scripted_client
from protlab.core.paths import PathManager
from protlab.dataset.models import MetadataTable, SingleCellDataset
from protlab.llm.errors import ReplayMiss
from protlab.services.http_cache import RecordedHttpClient
from protlab.services.thpa_client import ThpaClient
from protlab.statkit import read_gmt
from protlab.workflows import (
    WORKFLOW_SPECS,
    DependencyMissing,
    LocalCsvCohortPlugin,
    NoPluginRegistered,
    ParamValidation,
    PluginRegistry,
    UnknownProtein,
    UnknownWorkflow,
    WorkflowCall,
    WorkflowContext,
    WorkflowFailed,
    WorkflowRegistry,
    WrongDataKind,
    execute,
    summarize_tables,
    validate_call,
)
from protlab.workflows import registry as registry_module
from protlab.workflows.clinical import SUBTYPE_FIELD
from protlab.workflows.single_cell import FLOWSOM, FLOWSOM_TYPES, refinement_k
from protlab.workflows.summary import is_low_signal

MARKER_TYPES = {
    "CD3": "T Cells",
    "CD4": "T Cells",
    "CD8": "T Cells",
    "CD45RO": "T Cells",
    "CD19": "B Cells",
    "CD20": "B Cells",
    "CD14": "Monocytes",
    "CD56": "NK Cells",
}

CONDITION = {"field": "condition", "contrasts": [["Disease", "Healthy"]]}


def annotate_from_markers(prompt: str) -> str:
    for marker in prompt_list(prompt, "Markers"):
        if marker in MARKER_TYPES:
            return f"Analysis: {marker} is the top marker. Cell Type: {MARKER_TYPES[marker]}"
    return "Analysis: unclear. Cell Type: Unknown Cells"


def keep_annotations(prompt: str) -> str:
    return ", ".join(prompt_list(prompt, "Original annotations"))


ANNOTATOR_SCRIPT = {
    "cell_type_annotation": annotate_from_markers,
    "annotation_refinement": keep_annotations,
    "interpret_result": "The result shows group differences.",
}


class ListJournal:
    def __init__(self):
        self.events = []

    def record(self, kind: str, **payload) -> None:
        self.events.append((kind, payload))


def make_context(dataset, script=None, **kwargs) -> WorkflowContext:
    client, _ = scripted_client(script or {"interpret_result": "Reading."})
    return WorkflowContext(dataset=dataset, llm=client, **kwargs)


@pytest.fixture(scope="module")
def registry() -> WorkflowRegistry:
    return WorkflowRegistry()


@pytest.fixture(scope="module")
def annotated(pbmc):
    """toy-pbmc after Clustering and Annotation with a marker-driven annotator."""
    ctx = make_context(pbmc, ANNOTATOR_SCRIPT)
    result = execute(WorkflowCall("Clustering and Annotation"), ctx, WorkflowRegistry())
    return ctx.dataset, result


@pytest.fixture(scope="module")
def gene_sets():
    return [read_gmt(path) for path in PathManager.get_bundled_gene_sets()]


# =============================================================================
# Catalog and validation
# =============================================================================


def test_catalog_has_fifteen_workflows(registry: WorkflowRegistry) -> None:
    assert len(WORKFLOW_SPECS) == 15
    kinds = [s.data_kind for s in registry.specs()]
    assert kinds.count("single_cell") == 6
    assert kinds.count("clinical") == 6
    assert kinds.count("external") == 3


def test_catalog_text_lists_external_workflows(registry: WorkflowRegistry) -> None:
    text = registry.catalog_text("single_cell")
    assert text.startswith("1. Clustering and Annotation:")
    assert "THPA" in text
    assert "Survival Analysis" not in text


def test_lookup_is_case_insensitive(registry: WorkflowRegistry) -> None:
    assert registry.get("survival analysis").name == "Survival Analysis"
    with pytest.raises(UnknownWorkflow):
        registry.get("survival")


def test_direct_tools_expose_tool_names() -> None:
    direct = WorkflowRegistry(direct_tools=True)
    assert direct.get("survival").name == "Survival Analysis"
    assert "survival:" in direct.catalog_text("clinical")


def test_validate_normalizes_params(registry: WorkflowRegistry, pbmc) -> None:
    spec = registry.get("Differential Expression")
    params = validate_call(spec, {"field": "condition", "contrasts": [["Disease", "REST"]]}, pbmc)
    assert params == {"field": "condition", "contrasts": [["Disease", "REST"]]}


@pytest.mark.parametrize(
    "params, bad_param",
    [
        ({"field": "condition"}, "contrasts"),
        ({"field": "age", "contrasts": [["Disease", "Healthy"]]}, "field"),
        ({"field": "condition", "contrasts": [["Disease", "Control"]]}, "contrasts"),
        ({"field": "condition", "contrasts": [["REST", "REST"]]}, "contrasts"),
        ({"field": "condition", "contrasts": [["Disease", "Disease"]]}, "contrasts"),
        ({"field": "condition", "contrasts": [["Disease", "Healthy"]], "alpha": 0.1}, "alpha"),
    ],
)
def test_validate_rejects_bad_params(registry: WorkflowRegistry, pbmc, params: dict, bad_param: str) -> None:
    with pytest.raises(ParamValidation) as excinfo:
        validate_call(registry.get("Differential Expression"), params, pbmc)
    assert excinfo.value.param == bad_param


def test_validate_unknown_protein(registry: WorkflowRegistry, pbmc) -> None:
    with pytest.raises(UnknownProtein):
        validate_call(registry.get("Visualization"), {"proteins": ["CD3", "CD999"]}, pbmc)


def test_validate_choice(registry: WorkflowRegistry, cohort) -> None:
    with pytest.raises(ParamValidation):
        validate_call(registry.get("Survival Analysis"), {"analysis_type": "bayesian"}, cohort)


def test_external_dataset_needs_plugins(registry: WorkflowRegistry, cohort) -> None:
    params = {"dataset_name": "reference-cohort", "molecules": ["MKI67"]}
    with pytest.raises(NoPluginRegistered):
        validate_call(registry.get("External Survival"), params, cohort)


# =============================================================================
# Dispatch
# =============================================================================


def test_wrong_data_kind_is_journaled(registry: WorkflowRegistry, pbmc) -> None:
    journal = ListJournal()
    ctx = make_context(pbmc)
    with pytest.raises(WrongDataKind):
        execute(WorkflowCall("Consensus Clustering"), ctx, registry, journal=journal)
    assert journal.events[0][0] == "workflow_rejected"
    assert ctx.step == 0


def test_abundance_needs_annotation(registry: WorkflowRegistry, pbmc) -> None:
    with pytest.raises(DependencyMissing):
        execute(WorkflowCall("Differential Abundance (Cell Types)", CONDITION), make_context(pbmc), registry)


@pytest.mark.parametrize("name", ["Differential Expression", "Visualization"])
def test_per_sample_workflows_need_sample_field(registry: WorkflowRegistry, pbmc, name: str) -> None:
    types = {k: v for k, v in pbmc.meta.types.items() if k != "sample_id"}
    meta = MetadataTable(pbmc.meta.frame.drop(columns=["sample_id"]), types)
    unsampled = SingleCellDataset(matrix=pbmc.matrix, meta=meta)
    assert unsampled.sample_field is None
    params = CONDITION if name == "Differential Expression" else {"proteins": ["CD3"]}
    with pytest.raises(DependencyMissing):
        execute(WorkflowCall(name, params), make_context(unsampled), registry)


def test_failed_body_restores_dataset(registry: WorkflowRegistry, pbmc, monkeypatch: pytest.MonkeyPatch) -> None:
    def explode(ctx, params):
        ctx.dataset = ctx.dataset.with_metadata_field("scratch", ["x"] * ctx.dataset.n_cells, "categorical")
        raise RuntimeError("boom")

    monkeypatch.setitem(registry_module.WORKFLOW_BODIES, "Differential Expression", explode)
    journal = ListJournal()
    ctx = make_context(pbmc)
    with pytest.raises(WorkflowFailed) as excinfo:
        execute(WorkflowCall("Differential Expression", CONDITION), ctx, registry, journal=journal)
    assert isinstance(excinfo.value.cause, RuntimeError)
    assert ctx.dataset is pbmc
    assert journal.events[-1][0] == "workflow_failed"


def test_replay_miss_propagates_unwrapped(registry: WorkflowRegistry, pbmc, monkeypatch: pytest.MonkeyPatch) -> None:
    def miss(ctx, params):
        raise ReplayMiss("0" * 64, "interpret_result", "prompt")

    monkeypatch.setitem(registry_module.WORKFLOW_BODIES, "Differential Expression", miss)
    with pytest.raises(ReplayMiss):
        execute(WorkflowCall("Differential Expression", CONDITION), make_context(pbmc), registry)


def test_execute_writes_tables_and_journals(registry: WorkflowRegistry, pbmc, tmp_path: Path) -> None:
    journal = ListJournal()
    ctx = make_context(pbmc)
    result = execute(WorkflowCall("Differential Expression", CONDITION), ctx, registry, journal, tmp_path)
    assert [Path(a).name for a in result.artifacts] == ["01_differential_expression_differential_expression.csv"]
    kind, payload = journal.events[-1]
    assert kind == "workflow_executed"
    assert payload["result"]["digest"] == result.digest()
    assert result.interpretation == "Reading."


# =============================================================================
# Single-cell workflows
# =============================================================================


def test_clustering_recovers_planted_populations(annotated, pbmc_truth) -> None:
    dataset, result = annotated
    assert FLOWSOM in dataset.clusterings and FLOWSOM_TYPES in dataset.clusterings
    assert sorted(set(dataset.cell_types[FLOWSOM_TYPES].values())) == ["B Cells", "Monocytes", "NK Cells", "T Cells"]
    assert adjusted_rand_score(pbmc_truth, dataset.labels(FLOWSOM_TYPES)) > 0.95
    assert result.dataset_delta["clusterings"] == [FLOWSOM, FLOWSOM_TYPES]
    assert "Annotated cell types" in result.interpretation


def test_differential_abundance_finds_b_cell_expansion(annotated, registry: WorkflowRegistry) -> None:
    dataset, _ = annotated
    result = execute(WorkflowCall("Differential Abundance (Cell Types)", CONDITION), make_context(dataset), registry)
    table = result.tables["differential_abundance"].set_index("cell_type")
    assert table.loc["B Cells", "logFC"] > 1.0
    assert table.loc["Monocytes", "logFC"] < -1.0


def test_stratified_expression_finds_memory_shift(annotated, registry: WorkflowRegistry) -> None:
    dataset, _ = annotated
    ctx = make_context(dataset)
    params = dict(CONDITION, focus_cell_types=["T Cells"])
    result = execute(WorkflowCall("Stratified Differential Expression", params), ctx, registry)
    table = result.tables["differential_expression"]
    row = table[(table["cluster"] == "T Cells") & (table["protein"] == "CD45RO")].iloc[0]
    assert row["logFC"] > 0
    assert ctx.state["de_rows"]


def test_refinement_replaces_one_cell_type(annotated, registry: WorkflowRegistry) -> None:
    dataset, _ = annotated
    script = dict(ANNOTATOR_SCRIPT, cell_type_annotation="Analysis: memory. Cell Type: Memory T Cells")
    ctx = make_context(dataset, script)
    result = execute(WorkflowCall("Annotation Refinement", {"cell_type": "T Cells"}), ctx, registry)
    types = set(ctx.dataset.cell_types[FLOWSOM_TYPES].values())
    assert "T Cells" not in types
    assert "Memory T Cells" in types
    assert result.dataset_delta["refined_cell_type"] == "T Cells"
    # other populations keep their cells
    assert (ctx.dataset.cell_type_labels(FLOWSOM_TYPES) == "B Cells").sum() == (
        dataset.cell_type_labels(FLOWSOM_TYPES) == "B Cells"
    ).sum()


def test_refinement_k_clamps_small_types() -> None:
    assert refinement_k(400) == (8, False)
    assert refinement_k(60) == (3, False)
    assert refinement_k(3) == (1, True)


def test_visualization_writes_plots(pbmc, registry: WorkflowRegistry, tmp_path: Path) -> None:
    ctx = make_context(pbmc, artifact_dir=tmp_path)
    result = execute(WorkflowCall("Visualization", {"proteins": ["CD45RO", "CD19"]}), ctx, registry)
    names = sorted(Path(a).name for a in result.artifacts)
    assert names == ["01_visualization_cd19.svg", "01_visualization_cd45ro.svg", "01_visualization_heatmap.svg"]
    assert result.tables["heatmap"].shape == (6, 11)
    assert set(result.tables["samples"]["condition"]) == {"Disease", "Healthy"}


def test_visualization_asks_for_proteins(pbmc, registry: WorkflowRegistry) -> None:
    script = {"select_proteins": "CD3, CD999, CD19", "interpret_result": "Reading."}
    result = execute(WorkflowCall("Visualization"), make_context(pbmc, script), registry)
    assert set(result.tables["distributions"]["protein"]) == {"CD3", "CD19"}


# =============================================================================
# Clinical workflows
# =============================================================================


def test_consensus_clustering_adds_subtype_field(cohort, registry: WorkflowRegistry) -> None:
    ctx = make_context(cohort)
    result = execute(WorkflowCall("Consensus Clustering"), ctx, registry)
    assert ctx.dataset.clinical.types[SUBTYPE_FIELD] == "categorical"
    assert result.tables["subtype_sizes"]["n_samples"].sum() == 40
    assert result.dataset_delta["chosen_k"] == len(result.tables["subtype_sizes"])


def test_survival_flags_proliferation_marker(cohort, registry: WorkflowRegistry, tmp_path: Path) -> None:
    ctx = make_context(cohort, artifact_dir=tmp_path)
    params = {"analysis_type": "continuous", "molecules": ["MKI67", "ALB"]}
    result = execute(WorkflowCall("Survival Analysis", params), ctx, registry)
    table = result.tables["survival"].set_index("molecule")
    assert table.loc["MKI67", "hazard_ratio"] > 1.0
    assert table.loc["MKI67", "p"] < 0.05
    assert any(a.endswith("_mki67.svg") for a in result.artifacts)


def test_discrete_survival_reports_threshold(cohort, registry: WorkflowRegistry) -> None:
    params = {"analysis_type": "discrete", "molecules": ["MKI67"]}
    result = execute(WorkflowCall("Survival Analysis", params), make_context(cohort), registry)
    row = result.tables["survival"].iloc[0]
    assert row["percentile"] in (20, 30, 40, 50, 60, 70, 80)
    assert pd.isna(row["hazard_ratio"])


def test_molecule_correlation_adjusts_across_pairs(cohort, registry: WorkflowRegistry) -> None:
    params = {"molecules_x": ["CD3E", "CD4"], "molecules_y": ["ALB", "VIM"]}
    result = execute(WorkflowCall("Molecule Correlation", params), make_context(cohort), registry)
    table = result.tables["correlation"]
    assert len(table) == 4
    assert (table["p_adj"] >= table["p"]).all()
    # same block: strongly positive; opposite blocks: negative
    assert table[(table["x"] == "CD3E") & (table["y"] == "ALB")]["r"].iloc[0] > 0.8
    assert table[(table["x"] == "CD3E") & (table["y"] == "VIM")]["r"].iloc[0] < -0.8


def test_clinical_correlation_uses_numeric_field(cohort, registry: WorkflowRegistry) -> None:
    params = {"molecules": ["MKI67"], "clinical_feature": "age"}
    result = execute(WorkflowCall("Clinical Correlation", params), make_context(cohort), registry)
    assert result.tables["correlation"]["y"].tolist() == ["age"]


def test_enrichment_runs_expression_first(cohort, registry: WorkflowRegistry, gene_sets) -> None:
    ctx = make_context(cohort, gene_sets=gene_sets)
    result = execute(WorkflowCall("Enrichment Analysis"), ctx, registry)
    assert result.dataset_delta["auto_differential_expression"] == "condition"
    assert len(result.tables["enrichment"]) > 0
    assert ctx.state["de_rows"]


def test_enrichment_in_direct_tools_mode_needs_expression(cohort, gene_sets) -> None:
    ctx = make_context(cohort, gene_sets=gene_sets, direct_tools=True)
    with pytest.raises(DependencyMissing):
        execute(WorkflowCall("enrichment"), ctx, WorkflowRegistry(direct_tools=True))


# =============================================================================
# External workflows
# =============================================================================


def test_plugin_manifest_serves_reference_cohort(cohort, tmp_path: Path) -> None:
    plugins = PluginRegistry.from_manifest(PathManager.get_bundled_resource("data/plugins/manifest.json"), work_dir=tmp_path)
    assert plugins.datasets() == ["reference-cohort"]
    ctx = make_context(cohort, plugins=plugins)
    params = {"dataset_name": "reference-cohort", "molecules": ["MKI67"], "analysis_type": "continuous"}
    result = execute(WorkflowCall("External Survival", params), ctx, WorkflowRegistry())
    assert result.tables["survival"]["dataset"].tolist() == ["reference-cohort"]
    assert (tmp_path / "reference-cohort").is_dir()


def test_plugin_registry_rejects_non_plugins() -> None:
    with pytest.raises(TypeError):
        PluginRegistry([object()])
    with pytest.raises(NoPluginRegistered):
        PluginRegistry([LocalCsvCohortPlugin({})]).get("missing")


def test_external_correlation_unknown_molecule(cohort) -> None:
    plugins = PluginRegistry([LocalCsvCohortPlugin({"ref": {"synthetic": "toy-cohort", "seed": 2}})])
    params = {"dataset_name": "ref", "molecules_x": ["MKI67"], "molecules_y": ["NOPE"]}
    with pytest.raises(UnknownProtein):
        execute(WorkflowCall("External Correlation", params), make_context(cohort, plugins=plugins), WorkflowRegistry())


def test_thpa_workflow_picks_protein(cohort, tmp_path: Path) -> None:
    def handler(request: httpx.Request) -> httpx.Response:
        if request.url.path.endswith("search_download.php"):
            return httpx.Response(200, text=(DATA_DIR / "thpa_mki67_search.json").read_text(encoding="utf-8"))
        return httpx.Response(200, text=(DATA_DIR / "thpa_mki67_entry.json").read_text(encoding="utf-8"))

    http = RecordedHttpClient(tmp_path, transport=httpx.MockTransport(handler))
    script = {"select_thpa_protein": "Reasoning.\nProtein: MKI67"}
    ctx = make_context(cohort, script, thpa=ThpaClient(http, "https://thpa.test"))
    result = execute(WorkflowCall("THPA"), ctx, WorkflowRegistry())
    assert len(result.tables["thpa"]) == 5
    assert result.interpretation.startswith("MKI67 (ENSG00000148773)")


# =============================================================================
# Summaries
# =============================================================================


def test_summary_orders_by_significance_and_budget() -> None:
    frame = pd.DataFrame({"protein": ["A", "B", "C"], "p": [0.5, 0.001, 0.04], "p_adj": [0.5, 0.003, 0.06]})
    text = summarize_tables({"de": frame})
    lines = text.splitlines()
    assert lines[:2] == ["Table de: 3 rows", "Rows with p_adj < 0.05: 1"]
    assert lines[2].startswith("- protein=B")
    short = summarize_tables({"de": frame}, char_budget=len(lines[0]) + len(lines[1]) + len(lines[2]) + 60)
    assert "more rows not shown" in short
    assert summarize_tables({"de": frame}) == text


def test_low_signal() -> None:
    assert is_low_signal({"t": pd.DataFrame({"p_adj": [0.2, 0.9]})})
    assert not is_low_signal({"t": pd.DataFrame({"p_adj": [0.01]})})
    assert not is_low_signal({"t": pd.DataFrame({"r": [np.nan]})})
