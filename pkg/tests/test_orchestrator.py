"""Tests for the research loop, its journal, claim traceability and run reports."""

import json
import re
from pathlib import Path

import pandas as pd
import pytest

from conftest import scripted_client
from protlab.llm.errors import ReplayMiss
from protlab.orchestrator.journal import RunJournal
from protlab.orchestrator.models import Hypothesis, JournalError, OrchestratorError, RunConfig, StatClaim
from protlab.orchestrator.pipeline import ResearchPipeline, run_pipeline
from protlab.orchestrator.report import load_hypotheses, render_markdown, write_reports
from protlab.orchestrator.traceability import check_hypothesis, number_traces, numeric_cells

DE_ROW = re.compile(r"protein=([^;]+); logFC=([^;]+); p=([^;]+); p_adj=([^;\s]+)")


def hypotheses_from_results(prompt: str) -> str:
    """One hypothesis quoting the top result row, one quoting a number no table holds."""
    protein, logfc, _, p_adj = DE_ROW.search(prompt).groups()
    return (
        f"Summary: {protein} differs between conditions.\n"
        "Statistical Test:\n"
        f"- {protein} | Disease vs Healthy | Welch t-test | logFC={logfc}, p_adj={p_adj}\n"
        f"Hypothesis: Disease changes {protein} abundance.\n"
        "\n"
        "Summary: An invented effect.\n"
        "Statistical Test:\n"
        "- CD3 | Disease vs Healthy | Welch t-test | logFC=9.87\n"
        "Hypothesis: CD3 is strongly induced.\n"
    )


def run_script(**overrides) -> dict:
    script = {
        "data_description": "Mass cytometry of blood from three diseased and three healthy donors.",
        "plan_objectives": "1. Objective A\n2. Objective B\n3. Objective C\n4. Objective D",
        "plan_workflows": "1. Differential Expression\n2. Make Coffee",
        "select_parameters": '{"field": "condition", "contrasts": [["Disease", "Healthy"]]}',
        "interpret_result": "Expression differs between conditions.",
        "update_workflow_plan": "NONE",
        "propose_hypotheses": hypotheses_from_results,
        "update_objectives": ["1. Objective B\n2. Objective C", "1. Objective C"],
    }
    script.update(overrides)
    return script


CONFIG = RunConfig(mode="single_cell", max_objectives=3, hypotheses_per_objective=5, max_workflows_single_cell=2)


@pytest.fixture(scope="module")
def outcome(pbmc):
    client, _ = scripted_client(run_script())
    return run_pipeline(pbmc, CONFIG, client)


# =============================================================================
# Research loop
# =============================================================================


def test_run_activates_at_most_max_objectives(outcome) -> None:
    journal = outcome.journal
    assert journal.activated_objectives() == [1, 2, 3]
    assert [o.status for o in outcome.objectives] == ["completed"] * 3
    truncated = journal.events_of("objectives_truncated")
    assert truncated[0]["proposed"] == 4 and truncated[0]["kept"] == 3


def test_unknown_workflows_are_dropped_from_plan(outcome) -> None:
    dropped = outcome.journal.events_of("plan_dropped")
    assert dropped and dropped[0]["dropped"] == ["Make Coffee"]
    assert outcome.journal.executed_per_objective() == {1: 1, 2: 1, 3: 1}


def test_hypotheses_are_traced_to_tables(outcome) -> None:
    assert len(outcome.hypotheses) == 6
    traced = [h for h in outcome.hypotheses if h.traceable]
    assert len(traced) == 3
    assert all(h.stat_summary[0].entity != "CD3" for h in traced)
    warnings = outcome.journal.events_of("traceability_warning")
    assert [w["values"] for w in warnings] == [["CD3 logFC=9.87"]] * 3


def test_workflow_steps_number_across_objectives(outcome) -> None:
    steps = [e["step"] for e in outcome.journal.events_of("workflow_executed")]
    assert steps == [1, 2, 3]


def test_same_inputs_give_same_digest(pbmc, outcome) -> None:
    client, _ = scripted_client(run_script())
    again = run_pipeline(pbmc, CONFIG, client)
    assert again.journal.digest() == outcome.journal.digest()


def test_empty_plans_skip_objectives(pbmc) -> None:
    client, _ = scripted_client(run_script(plan_workflows="1. Make Coffee"))
    result = run_pipeline(pbmc, CONFIG, client)
    assert result.hypotheses == []
    assert len(result.journal.events_of("planning_failed")) == 3
    assert len(result.journal.events_of("hypotheses_skipped")) == 3


def test_objective_updater_failure_keeps_queue(pbmc) -> None:
    client, _ = scripted_client(run_script(update_objectives="I cannot decide."))
    result = run_pipeline(pbmc, CONFIG, client)
    assert [o.text for o in result.objectives] == ["Objective A", "Objective B", "Objective C"]
    assert result.journal.events_of("updater_failed")[0]["step"] == "update_objectives"


def test_replay_miss_halts_run(pbmc) -> None:
    def miss(prompt: str) -> str:
        raise ReplayMiss("f" * 64, "plan_workflows", prompt)

    client, _ = scripted_client(run_script(plan_workflows=miss))
    pipeline = ResearchPipeline(client, CONFIG)
    with pytest.raises(ReplayMiss):
        pipeline.run(pbmc)
    halted = pipeline.journal.events_of("run_halted")
    assert halted[0]["template_id"] == "plan_workflows"


def test_mode_must_match_dataset(cohort) -> None:
    client, _ = scripted_client({})
    with pytest.raises(OrchestratorError):
        run_pipeline(cohort, CONFIG, client)


# =============================================================================
# Journal
# =============================================================================


def test_journal_save_and_verify(outcome, tmp_path: Path) -> None:
    path = outcome.journal.save(tmp_path / "journal.json")
    assert RunJournal.load(path).digest() == outcome.journal.digest()

    data = json.loads(path.read_text(encoding="utf-8"))
    data["events"][0]["kind"] = "tampered"
    path.write_text(json.dumps(data), encoding="utf-8")
    with pytest.raises(JournalError):
        RunJournal.load(path)
    assert RunJournal.load(path, verify=False).events[0]["kind"] == "tampered"


def test_journal_digest_ignores_key_order() -> None:
    a = RunJournal({"b": 1, "a": 2})
    b = RunJournal({"a": 2, "b": 1})
    a.record("step", x=1, y=[1, 2])
    b.record("step", y=[1, 2], x=1)
    assert a.digest() == b.digest()
    b.record("step", x=2)
    assert a.digest() != b.digest()


def test_journal_rejects_second_description() -> None:
    journal = RunJournal(description={"counts": {}})
    with pytest.raises(JournalError):
        journal.set_description({"counts": {}})


# =============================================================================
# Traceability
# =============================================================================


def test_number_traces_at_quoted_precision() -> None:
    assert number_traces("0.0413", 0.0413, [0.041301])
    assert number_traces("3.2e-08", 3.2e-08, [3.2147e-08])
    assert number_traces("1.5", 1.5, [1.5000004])
    assert not number_traces("0.5", 0.5, [0.54])
    assert not number_traces("0.0413", 0.0413, [0.0418])


def test_numeric_cells_skip_text() -> None:
    assert numeric_cells(["B Cells", "1.5", 2, "nan", None, "inf"]) == [1.5, 2.0]


def test_corrupted_claim_is_flagged() -> None:
    claim = StatClaim("CD19", "Disease vs Healthy", "Welch t-test", logFC=1.21, p_adj=0.0031,
                      raw_values={"logFC": "1.21", "p_adj": "0.0031"})
    hypothesis = Hypothesis("B cells shift.", (claim,), "Disease expands B cells.")
    assert check_hypothesis(hypothesis, [1.2104, 0.00312]).traceable
    flagged = check_hypothesis(hypothesis, [1.2104, 0.0049])
    assert flagged.untraceable == ("CD19 p_adj=0.0031",)


def test_rounded_match_stays_on_entity_rows() -> None:
    rows = [
        ["Disease vs Healthy", "CD19", "1.2104", "0.0412", "0.0872"],
        ["Disease vs Healthy", "CD3", "0.0113", "0.0098", "0.0101"],
    ]
    cells = numeric_cells(cell for row in rows for cell in row)
    claim = StatClaim("CD19", "Disease vs Healthy", "Welch t-test", logFC=1.21, p_adj=0.01,
                      raw_values={"logFC": "1.21", "p_adj": "0.01"})
    hypothesis = Hypothesis("B cells shift.", (claim,), "Disease expands B cells.")
    # the CD3 row would satisfy p_adj=0.01 at two decimals
    assert check_hypothesis(hypothesis, cells).traceable
    assert check_hypothesis(hypothesis, cells, rows).untraceable == ("CD19 p_adj=0.01",)

    unnamed = StatClaim("B cell CD19", "Disease vs Healthy", "Welch t-test", logFC=1.21,
                        raw_values={"logFC": "1.21"})
    assert check_hypothesis(Hypothesis("o", (unnamed,), "s"), cells, rows).traceable


# =============================================================================
# Reports
# =============================================================================


def test_reports_are_written_from_journal(outcome, tmp_path: Path) -> None:
    md_path, csv_path, json_path = write_reports(outcome.journal, tmp_path)
    markdown = md_path.read_text(encoding="utf-8")
    assert "## Objective 1: Objective A" in markdown
    assert "### Hypothesis 6" in markdown
    assert "> Untraceable values: CD3 logFC=9.87" in markdown
    assert f"`{outcome.journal.digest()}`" in markdown

    claims = pd.read_csv(csv_path, encoding="utf-8-sig")
    assert len(claims) == 6
    assert claims["traceable"].tolist().count(False) == 3

    reloaded = load_hypotheses(json_path)
    assert [h.statement for h in reloaded] == [h.statement for h in outcome.hypotheses]


def test_hypotheses_load_from_journal_file(outcome, tmp_path: Path) -> None:
    path = outcome.journal.save(tmp_path / "journal.json")
    assert len(load_hypotheses(path)) == 6


def test_load_hypotheses_rejects_other_json(tmp_path: Path) -> None:
    path = tmp_path / "bad.json"
    path.write_text('{"foo": 1}', encoding="utf-8")
    with pytest.raises(JournalError):
        load_hypotheses(path)


def test_markdown_without_run_summary() -> None:
    assert render_markdown(RunJournal()).startswith("# Research run report")
