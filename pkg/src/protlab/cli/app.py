"""
Command-line dispatch.

Subcommands:
    run            full research pipeline over one dataset
    describe       structured summary plus LLM narrative
    workflow       one workflow with explicit JSON parameters
    evaluate       score a hypothesis file (one or more evaluators)
    bestofn        best-of-N selection over per-run score files
    agreement      within-one-point agreement of two score files
    replay-verify  check a journal's digest, optionally by re-running it

Exit codes: 0 ok, 2 usage, 3 config/dataset/IO, 4 pipeline.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Callable, Optional, Sequence

from .._version import __version__
from ..core.config import VALID_MODES, VALID_TRANSPORTS, ConfigManager
from ..core.errors import ConfigError, ProtlabError, UsageError
from ..core.paths import PathManager
from ..dataset.io import save_dataset
from ..dataset.models import DatasetError
from ..dataset.ops import structured_summary
from ..evaluation.models import EvaluatorConfig, Metric
from ..evaluation.report import (
    load_scores,
    write_comparison_reports,
    write_evaluation_reports,
)
from ..evaluation.scoring import HypothesisEvaluator, multi_evaluator
from ..evaluation.stats import aggregate, agreement_within_1, best_of_n
from ..llm.client import ChatClient, ModelParams, RecordingStore, ReplayTransport
from ..orchestrator.journal import RunJournal
from ..orchestrator.models import Objective, OrchestratorError, RunConfig
from ..orchestrator.pipeline import CHARS_PER_TOKEN, ResearchPipeline
from ..orchestrator.planner import description_text, generate_description
from ..orchestrator.report import load_hypotheses, write_reports
from ..services.pubmed_client import MAX_LIMIT, MIN_LIMIT
from ..services.thpa_client import ThpaClient
from ..workflows.common import slugify
from ..workflows.executor import execute
from ..workflows.models import UnknownWorkflow, WorkflowCall, WorkflowContext
from ..workflows.registry import WorkflowRegistry
from .runtime import (
    build_http,
    build_runtime,
    builtin_kind,
    load_gene_sets,
    load_plugins,
    pubmed_client,
    recordings_path,
    resolve_dataset,
    thpa_client,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_PIPELINE = 4


# =============================================================================
# Parser
# =============================================================================


def _common_parent() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON config file (flags override it)")
    common.add_argument("--out", help="Output directory; nothing is written outside it")
    common.add_argument("--transport", choices=VALID_TRANSPORTS, help="LLM transport")
    common.add_argument("--recordings", help="LLM recording store (JSONL)")
    common.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
    return common


def _dataset_parent() -> argparse.ArgumentParser:
    data = argparse.ArgumentParser(add_help=False)
    data.add_argument(
        "--dataset",
        required=True,
        help="Built-in name (toy-pbmc, toy-cohort), a directory, or 'expr.csv,meta.csv'",
    )
    data.add_argument("--mode", choices=VALID_MODES, help="Dataset kind (inferred for built-in names)")
    return data


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="protlab", description="Autonomous proteomics research agent.")
    parser.add_argument("--version", action="version", version=f"protlab {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command")
    common, data = _common_parent(), _dataset_parent()

    p = sub.add_parser("run", parents=[common, data], help="Run the full research pipeline")
    p.add_argument("--max-objectives", type=int, help="Cap on activated objectives")
    p.add_argument("--attach-images", action="store_true", help="Send plot PNGs to image-capable models")
    p.set_defaults(handler=cmd_run)

    p = sub.add_parser("describe", parents=[common, data], help="Describe a dataset")
    p.add_argument("--structured-only", action="store_true", help="Skip the LLM narrative")
    p.set_defaults(handler=cmd_describe)

    p = sub.add_parser("workflow", parents=[common, data], help="Run one workflow")
    p.add_argument("name", help="Workflow name (case-insensitive)")
    p.add_argument("--params", default="{}", help="Parameters as a JSON object")
    p.add_argument("--objective", default="", help="Objective text given to LLM-assisted steps")
    p.set_defaults(handler=cmd_workflow)

    p = sub.add_parser("evaluate", parents=[common], help="Score a hypothesis file")
    p.add_argument("--hypotheses", type=Path, required=True, help="Hypothesis JSON or run journal")
    p.add_argument("--paper", type=Path, help="Reference paper as plain text")
    p.add_argument("--metrics", help="Comma-separated metrics (default: all available)")
    p.add_argument("--evaluator", action="append", help="Evaluator 'tag=provider:model'; repeatable")
    p.add_argument("--label", default="", help="Prefix for hypothesis ids (e.g. a run name)")
    p.add_argument("--dataset-name", default="", help="Dataset column of the score table")
    p.set_defaults(handler=cmd_evaluate)

    p = sub.add_parser("bestofn", parents=[common], help="Best-of-N selection over run score files")
    p.add_argument("scores", nargs="+", type=Path, help="One score CSV per run, in run order")
    p.add_argument("--evaluator", help="Evaluator tag to use when a file holds several")
    p.set_defaults(handler=cmd_bestofn)

    p = sub.add_parser("agreement", parents=[common], help="Within-one-point agreement of two score files")
    p.add_argument("scores_a", type=Path)
    p.add_argument("scores_b", type=Path)
    p.set_defaults(handler=cmd_agreement)

    p = sub.add_parser("replay-verify", parents=[common], help="Verify a journal digest")
    p.add_argument("--journal", type=Path, help="Journal file (default: <out>/journal.json)")
    p.add_argument("--dataset", help="Re-run the journal's configuration on this dataset under replay")
    p.set_defaults(handler=cmd_replay_verify)
    return parser


def load_config(args: argparse.Namespace) -> ConfigManager:
    config = ConfigManager(args.config)
    mode = getattr(args, "mode", None)
    dataset = getattr(args, "dataset", None)
    if mode is None and dataset:
        mode = builtin_kind(dataset)
    evaluators = getattr(args, "evaluator", None)
    config.apply_overrides(
        {
            "paths.out_dir": args.out,
            "llm.transport": args.transport,
            "llm.recordings": args.recordings,
            "run.mode": mode,
            "run.max_objectives": getattr(args, "max_objectives", None),
            "evaluation.evaluators": evaluators if isinstance(evaluators, list) else None,
        }
    )
    return config


# =============================================================================
# Commands
# =============================================================================


def _log_progress(objective: Objective, activated: int, total: int) -> None:
    logger.info(f"[Pipeline] Objective {activated}/{total}: {objective.text}")


def cmd_run(args: argparse.Namespace, config: ConfigManager) -> int:
    runtime = build_runtime(config, images=args.attach_images)
    paths = runtime.paths
    dataset = resolve_dataset(args.dataset, runtime.run_config.mode, config, paths)
    config.save(paths.get_config_snapshot_path())

    pipeline = ResearchPipeline(
        runtime.llm,
        runtime.run_config,
        plugins=load_plugins(config, paths),
        thpa=thpa_client(runtime),
        gene_sets=load_gene_sets(config),
        artifact_dir=paths.get_artifact_dir(),
        table_dir=paths.get_table_dir(),
        attach_images=args.attach_images,
        config_snapshot=runtime.snapshot(),
    )
    try:
        outcome = pipeline.run(dataset, progress_callback=_log_progress)
    finally:
        pipeline.journal.save(paths.get_journal_path())

    reports = write_reports(outcome.journal, paths.get_report_path("run.md").parent)
    if outcome.dataset is not None:
        save_dataset(outcome.dataset, paths.get_dataset_dir())
    print(f"Objectives: {len([o for o in outcome.objectives if o.status == 'completed'])}")
    print(f"Hypotheses: {len(outcome.hypotheses)}")
    print(f"Journal: {paths.get_journal_path()} (digest {outcome.journal.digest()})")
    print(f"Report: {reports[0]}")
    return EXIT_OK


def cmd_describe(args: argparse.Namespace, config: ConfigManager) -> int:
    if args.structured_only:
        paths = PathManager(config.get_out_dir())
        dataset = resolve_dataset(args.dataset, config.get("run", "mode"), config, paths)
        text = structured_summary(dataset).to_text()
    else:
        runtime = build_runtime(config)
        paths = runtime.paths
        dataset = resolve_dataset(args.dataset, runtime.run_config.mode, config, paths)
        text = description_text(generate_description(dataset, runtime.llm))
    path = paths.get_report_path("description.md")
    path.write_text(text + "\n", encoding="utf-8")
    print(text)
    return EXIT_OK


def cmd_workflow(args: argparse.Namespace, config: ConfigManager) -> int:
    try:
        params = json.loads(args.params)
    except json.JSONDecodeError as e:
        raise UsageError(f"--params is not valid JSON: {e}")
    if not isinstance(params, dict):
        raise UsageError("--params must be a JSON object")

    runtime = build_runtime(config)
    paths, run_config = runtime.paths, runtime.run_config
    dataset = resolve_dataset(args.dataset, run_config.mode, config, paths)
    registry = WorkflowRegistry(direct_tools=run_config.clinical_direct_tools and run_config.mode == "clinical")
    try:
        spec = registry.get(args.name)
    except UnknownWorkflow as e:
        raise UsageError(f"{e}. Available: {', '.join(registry.list())}")

    ctx = WorkflowContext(
        dataset=dataset,
        llm=runtime.llm,
        objective=args.objective,
        tissue=run_config.tissue,
        seed=run_config.seed,
        retry_budget=run_config.retry_budget,
        artifact_dir=paths.get_artifact_dir(),
        thpa=thpa_client(runtime),
        plugins=load_plugins(config, paths),
        gene_sets=load_gene_sets(config),
        direct_tools=registry.direct_tools,
        char_budget=run_config.context_token_budget * CHARS_PER_TOKEN // 4,
    )
    journal = RunJournal(runtime.snapshot(), structured_summary(dataset).to_dict())
    try:
        result = execute(WorkflowCall(spec.name, params), ctx, registry, journal, paths.get_table_dir())
    finally:
        journal.save(paths.get_out_dir() / f"workflow_{slugify(spec.name)}.json")
    if result.dataset_delta:
        save_dataset(ctx.dataset, paths.get_dataset_dir())
    print(result.numeric_summary)
    if result.interpretation:
        print()
        print(result.interpretation)
    return EXIT_OK


def _metrics(args: argparse.Namespace) -> tuple[list[Metric], bool]:
    if args.metrics:
        try:
            return [Metric.parse(name) for name in args.metrics.split(",") if name.strip()], True
        except ValueError as e:
            raise UsageError(str(e))
    return list(Metric), False


def cmd_evaluate(args: argparse.Namespace, config: ConfigManager) -> int:
    runtime = build_runtime(config)
    evaluation = config.get_evaluation_section()
    hypotheses = load_hypotheses(args.hypotheses)
    if not hypotheses:
        raise UsageError(f"No hypotheses in {args.hypotheses}")
    prefix = f"{args.label}-" if args.label else ""
    items = [(f"{prefix}H{i}", h) for i, h in enumerate(hypotheses, start=1)]

    metrics, explicit = _metrics(args)
    paper_text = args.paper.read_text(encoding="utf-8") if args.paper else None
    if paper_text is None and not explicit:
        logger.info("[Eval] No reference paper; skipping PaperAlignment")
        metrics = [m for m in metrics if m is not Metric.PAPER_ALIGNMENT]

    pubmed = pubmed_client(runtime)
    out_dir = runtime.paths.get_report_path("evaluation.md").parent
    limit = int(evaluation["pubmed_limit"])
    if not MIN_LIMIT <= limit <= MAX_LIMIT:
        raise ConfigError(f"evaluation.pubmed_limit must be within {MIN_LIMIT}..{MAX_LIMIT}, got {limit}")
    specs = evaluation["evaluators"]
    try:
        configs = [EvaluatorConfig.parse(s, runtime.params.provider) for s in specs]
    except ValueError as e:
        raise UsageError(str(e))

    if len(configs) <= 1:
        if configs:
            evaluator_config = configs[0]
            llm = runtime.llm.with_params(
                replace(runtime.params, model=evaluator_config.model, provider=evaluator_config.provider)
            )
            tag = evaluator_config.tag
        else:
            llm, tag = runtime.llm, runtime.params.model
        evaluator = HypothesisEvaluator(
            llm, pubmed, tag=tag, pubmed_limit=limit, retry_budget=runtime.run_config.retry_budget,
            chunk_words=int(evaluation["chunk_words"]), chunk_overlap=int(evaluation["chunk_overlap"]),
        )
        scores = evaluator.evaluate(items, metrics, paper_text=paper_text, dataset=args.dataset_name)
        paths = write_evaluation_reports(scores, aggregate(scores), out_dir)
        print(f"Scored {len(items)} hypotheses on {len(metrics)} metrics: {paths[0]}")
        return EXIT_OK

    result = multi_evaluator(
        items, configs, runtime.llm, pubmed=pubmed, metrics=metrics, paper_text=paper_text,
        dataset=args.dataset_name, pubmed_limit=limit, retry_budget=runtime.run_config.retry_budget,
    )
    for tag, scores in sorted(result.scores.items()):
        write_evaluation_reports(scores, result.aggregates[tag], out_dir, stem=f"evaluation_{slugify(tag)}")
    paths = write_comparison_reports(result, out_dir)
    print(f"{len(result.scores)} of {len(configs)} evaluators completed: {paths[1]}")
    return EXIT_OK if result.scores else EXIT_PIPELINE


def cmd_bestofn(args: argparse.Namespace, config: ConfigManager) -> int:
    paths = PathManager(config.get_out_dir())
    runs, all_scores = [], []
    for i, path in enumerate(args.scores, start=1):
        scores = load_scores(path)
        evaluators = sorted({s.evaluator for s in scores})
        if args.evaluator:
            scores = [s for s in scores if s.evaluator == args.evaluator]
        elif len(evaluators) > 1:
            raise UsageError(f"{path} holds scores from {evaluators}; choose one with --evaluator")
        scores = [replace(s, hypothesis_id=f"run{i}:{s.hypothesis_id}") for s in scores]
        runs.append(list(dict.fromkeys(s.hypothesis_id for s in scores)))
        all_scores.extend(scores)

    result = best_of_n(runs, all_scores)
    out_dir = paths.get_report_path("best_of_n.csv").parent
    result.to_frame().to_csv(out_dir / "best_of_n_trend.csv", index=False, encoding="utf-8-sig")
    with open(out_dir / "best_of_n_selected.csv", "w", encoding="utf-8") as f:
        f.write("slot,hypothesis_id,average\n")
        for slot, (hid, avg) in enumerate(zip(result.selected, result.selected_averages), start=1):
            f.write(f"{slot},{hid},{avg:.6f}\n")
    for n, value in enumerate(result.curve, start=1):
        print(f"N={n}: {value:.3f}")
    return EXIT_OK


def cmd_agreement(args: argparse.Namespace, config: ConfigManager) -> int:
    paths = PathManager(config.get_out_dir())
    result = agreement_within_1(load_scores(args.scores_a), load_scores(args.scores_b))
    frame = result.to_frame()
    frame.to_csv(paths.get_report_path("agreement.csv"), index=False, encoding="utf-8-sig")
    print(frame.to_string(index=False))
    return EXIT_OK


def cmd_replay_verify(args: argparse.Namespace, config: ConfigManager) -> int:
    paths = PathManager(config.get_out_dir())
    journal_path = args.journal or paths.get_journal_path()
    if not Path(journal_path).is_file():
        raise ConfigError(f"Journal not found: {journal_path}")
    journal = RunJournal.load(journal_path)
    print(f"Journal digest verified: {journal.digest()}")
    if not args.dataset:
        return EXIT_OK

    snapshot = journal.config_snapshot
    try:
        run_config = RunConfig(**snapshot["run"])
        params = ModelParams(**snapshot["llm"])
    except (KeyError, TypeError) as e:
        raise ConfigError(f"Journal has no usable configuration snapshot: {e}")
    store_path = recordings_path(config, paths)
    if not store_path.is_file():
        raise ConfigError(f"Replay needs an existing recordings file: {store_path}")

    config.set("run", "seed", run_config.seed)
    verify_paths = PathManager(paths.get_out_dir() / "replay-verify")
    config.set("paths", "out_dir", str(verify_paths.get_out_dir()))
    config.set("llm", "transport", "replay")
    llm = ChatClient(ReplayTransport(RecordingStore(store_path)), params, step_models=snapshot.get("step_models"))
    http = build_http(config, verify_paths)
    dataset = resolve_dataset(args.dataset, run_config.mode, config, verify_paths)

    pipeline = ResearchPipeline(
        llm,
        run_config,
        plugins=load_plugins(config, verify_paths),
        thpa=ThpaClient(http),
        gene_sets=load_gene_sets(config),
        artifact_dir=verify_paths.get_artifact_dir(),
        table_dir=verify_paths.get_table_dir(),
        config_snapshot=snapshot,
    )
    outcome = pipeline.run(dataset)
    outcome.journal.save(verify_paths.get_journal_path())
    if outcome.journal.digest() != journal.digest():
        raise OrchestratorError(
            f"Replayed digest {outcome.journal.digest()} differs from journal digest {journal.digest()}"
        )
    print("Replayed run reproduces the journal digest")
    return EXIT_OK


# =============================================================================
# Dispatch
# =============================================================================


def dispatch(
    argv: Optional[Sequence[str]] = None,
    setup_logging: Optional[Callable[[Path, bool], object]] = None,
) -> int:
    """Parse argv, run the subcommand and map errors to exit codes."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE

    try:
        config = load_config(args)
        if setup_logging is not None:
            setup_logging(PathManager(config.get_out_dir()).get_log_dir(), args.verbose)
        return args.handler(args, config)
    except UsageError as e:
        print(f"protlab {args.command}: {e}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    except (ConfigError, DatasetError, OSError) as e:
        logger.error(f"[Config] {e}")
        print(f"protlab {args.command}: {e}", file=sys.stderr)
        return EXIT_IO
    except ProtlabError as e:
        logger.error(f"[Pipeline] {type(e).__name__}: {e}")
        print(f"protlab {args.command}: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_PIPELINE
