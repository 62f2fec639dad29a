"""
Command line: extract, featurize, train, eval, predict, gen-synthetic, ablate and sweep.

Exit codes: 0 on success, 1 on usage or configuration errors (and cancellation),
2 on data errors. Machine-readable output is JSON Lines; reports are Markdown.
"""

from __future__ import annotations

import argparse
import json
import sys
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, NoReturn

import numpy as np

from . import print_messages
from .call_graph import CallGraph, ProjectExtraction, discover_projects, extract_project
from .checkpoint import load_checkpoint
from .config import RunConfig, load_config
from .dot_format import emit_dot, parse_dot
from .exceptions import (
    CallAuditError,
    CancellationRequested,
    ConfigurationError,
    DataError,
    DotSyntaxError,
)
from .graph_cache import CachedDataset, build_dataset
from .graph_ingest import (
    GraphSample,
    LabelVocab,
    featurize,
    featurize_all,
    load_graphs,
    read_manifest,
)
from .metrics import Metrics
from .model import CallGraphClassifier
from .print_messages import echo, error, group, info, warning
from .report import ExternalCall, PredictionRecord, ReportTemplate
from .signal_handling import CancellationHandler
from .synthetic import SyntheticSpec, generate_corpus
from .training import (
    AblationRow,
    EpochRecord,
    SweepRow,
    evaluate,
    predict_probabilities,
    run_ablation,
    run_sweep,
    train,
)
from .version import VERSION

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """Argument parser whose usage errors map to exit code 1 instead of 2."""

    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        raise _UsageError(message)


def _json_line(payload: Any) -> str:
    return json.dumps(payload, sort_keys=True)


def _write_jsonl(path: Path, lines: Sequence[str]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def _out_dir(config: RunConfig, default: str) -> Path:
    out = config.out or Path(default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _require(value: Path | None, what: str) -> Path:
    if value is None:
        raise ConfigurationError(f"{what} is required")
    return value


# extract


def _report_parse_errors(extraction: ProjectExtraction) -> None:
    for e in extraction.errors:
        warning(e.message, title="Solidity parse error", file=e.file, line=e.line, col=e.column)


def extract_sources(source_dir: Path, workers: int = 1) -> list[ProjectExtraction]:
    """Extracts the call graph of every project under `source_dir`, in project-name order."""
    projects = discover_projects(source_dir)

    def run(item: tuple[str, list[Path]]) -> ProjectExtraction:
        name, files = item
        root = source_dir / name if (source_dir / name).is_dir() else source_dir
        return extract_project(name, files, root)

    items = sorted(projects.items())
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(run, items))
    return [run(item) for item in items]


def cmd_extract(config: RunConfig) -> int:
    source_dir = _require(config.source_dir, "source directory")
    out = _out_dir(config, "dot")
    for extraction in extract_sources(source_dir, config.workers):
        _report_parse_errors(extraction)
        (out / f"{extraction.name}.dot").write_text(emit_dot(extraction.graph), encoding="utf-8")
        graph = extraction.graph
        echo(
            _json_line(
                {
                    "project": extraction.name,
                    "nodes": len(graph.nodes),
                    "edges": len(graph.edges),
                    "external_edges": len(graph.external_edges()),
                    "parse_errors": len(extraction.errors),
                }
            )
        )
    return EXIT_OK


# featurize / train


def cmd_featurize(config: RunConfig) -> int:
    manifest = _require(config.manifest, "manifest")
    cache = config.cache or _out_dir(config, "run") / "dataset.cache"
    dataset = build_dataset(read_manifest(manifest), config.embedding_dim, config.seed, cache)
    echo(
        _json_line(
            {
                "cache": str(cache),
                "fingerprint": dataset.fingerprint,
                "graphs": len(dataset.samples),
                "labels": len(dataset.vocab),
            }
        )
    )
    return EXIT_OK


def _load_dataset(config: RunConfig) -> CachedDataset:
    entries = read_manifest(_require(config.manifest, "manifest"))
    return build_dataset(entries, config.embedding_dim, config.seed, config.cache)


def _metrics_line(name: str, metrics: Metrics) -> str:
    return _json_line({"name": name, **metrics.model_dump()})


def cmd_train(config: RunConfig) -> int:
    out = _out_dir(config, "run")
    dataset = _load_dataset(config)
    log_path = out / "epochs.jsonl"
    log_path.write_text("", encoding="utf-8")
    settings = config.model_settings()

    with log_path.open("a", encoding="utf-8") as log_file:

        def on_epoch(record: EpochRecord) -> None:
            log_file.write(record.model_dump_json() + "\n")
            log_file.flush()
            info(
                f"epoch {record.epoch}/{settings.epochs}: loss {record.train_loss:.4f}, "
                f"val F1 {record.val_f1:.4f}"
            )

        with group(f"Training on {len(dataset.samples)} graphs"):
            with CancellationHandler() as cancellation:
                cancellation.register(log_file.flush)
                result = train(
                    settings,
                    dataset.samples,
                    dataset.vocab,
                    on_epoch=on_epoch,
                    cancellation=cancellation,
                )

    checkpoint_path = config.checkpoint or out / "checkpoint.zip"
    result.checkpoint.save(checkpoint_path)
    held_out = [dataset.samples[i] for i in (result.split.validation or result.split.train)]
    train_part = [dataset.samples[i] for i in result.split.train]
    named = [
        ("train", evaluate(result.checkpoint, train_part, workers=config.eval_workers)),
        ("validation", evaluate(result.checkpoint, held_out, workers=config.eval_workers)),
    ]
    report = ReportTemplate.metrics_report("Training report", named)
    report.write(config.report or out / "report.md")
    report.append_to_step_summary()
    for name, metrics in named:
        echo(_metrics_line(name, metrics))
    info(f"checkpoint written to {checkpoint_path}")
    return EXIT_OK


# eval / predict


def _checkpoint_vocab(labels: list[str], embedding: np.ndarray) -> LabelVocab:
    return LabelVocab(labels, np.array(embedding, dtype=np.float64))


def cmd_eval(config: RunConfig) -> int:
    checkpoint = load_checkpoint(_require(config.checkpoint, "checkpoint"))
    model = CallGraphClassifier.from_checkpoint(checkpoint)
    vocab = _checkpoint_vocab(checkpoint.vocab_labels, checkpoint.params["embedding.weight"])
    entries = read_manifest(_require(config.manifest, "manifest"))
    samples = featurize_all(load_graphs(entries), vocab)
    metrics = evaluate(model, samples, workers=config.eval_workers)
    if config.report is not None:
        ReportTemplate.metrics_report("Evaluation report", [("model", metrics)]).write(
            config.report
        )
    echo(_metrics_line("eval", metrics))
    return EXIT_OK


def load_prediction_targets(target: Path, workers: int = 1) -> list[tuple[str, CallGraph]]:
    """
    Graphs to audit: a DOT file, a directory of DOT files, or a Solidity source directory.

    :raises DotSyntaxError: on malformed DOT input
    :raises NoSourcesFound: when a directory holds neither DOT nor Solidity files
    """
    if target.is_file():
        return [(target.stem, parse_dot(target.read_text(encoding="utf-8")))]
    dot_files = sorted(target.glob("*.dot")) if target.is_dir() else []
    if dot_files:
        graphs: list[tuple[str, CallGraph]] = []
        for path in dot_files:
            try:
                graphs.append((path.stem, parse_dot(path.read_text(encoding="utf-8"))))
            except DotSyntaxError as e:
                raise DotSyntaxError(f"{path.name}: {e}") from e
        return graphs
    extractions = extract_sources(target, workers)
    for extraction in extractions:
        _report_parse_errors(extraction)
    return [(extraction.name, extraction.graph) for extraction in extractions]


def predict_graphs(
    model: CallGraphClassifier, vocab: LabelVocab, graphs: Sequence[tuple[str, CallGraph]]
) -> list[PredictionRecord]:
    samples: list[GraphSample] = [featurize(graph, vocab, 0, name) for name, graph in graphs]
    probabilities = predict_probabilities(model, samples) if samples else np.zeros(0)
    records: list[PredictionRecord] = []
    for (name, graph), probability in zip(graphs, probabilities, strict=True):
        records.append(
            PredictionRecord(
                name=name,
                verdict="vulnerable" if probability >= 0.5 else "clean",
                probability=float(probability),
                external_calls=[
                    ExternalCall(caller=edge.src, callee=edge.dst)
                    for edge in graph.external_edges()
                ],
            )
        )
    return records


def cmd_predict(config: RunConfig) -> int:
    checkpoint = load_checkpoint(_require(config.checkpoint, "checkpoint"))
    model = CallGraphClassifier.from_checkpoint(checkpoint)
    vocab = _checkpoint_vocab(checkpoint.vocab_labels, checkpoint.params["embedding.weight"])
    target = _require(config.dot_dir or config.source_dir, "prediction target")
    records = predict_graphs(model, vocab, load_prediction_targets(target, config.workers))
    out = _out_dir(config, "audit")
    lines = [record.model_dump_json() for record in records]
    _write_jsonl(out / "predictions.jsonl", lines)
    report = ReportTemplate.audit_report(records)
    report.write(config.report or out / "audit.md")
    report.append_to_step_summary()
    for line in lines:
        echo(line)
    return EXIT_OK


# synthetic / experiments


def cmd_gen_synthetic(config: RunConfig, spec: SyntheticSpec) -> int:
    out = _out_dir(config, "synthetic")
    manifest = generate_corpus(spec, out)
    echo(_json_line({"graphs": spec.count, "manifest": str(manifest)}))
    return EXIT_OK


def cmd_ablate(config: RunConfig) -> int:
    out = _out_dir(config, "ablation")
    dataset = _load_dataset(config)
    lines: list[str] = []

    def on_row(row: AblationRow) -> None:
        line = row.model_dump_json()
        lines.append(line)
        echo(line)

    with group("Ablation"):
        table = run_ablation(
            config.model_settings(),
            dataset.samples,
            dataset.vocab,
            variants=config.variants,
            losses=config.losses,
            seeds=config.seeds,
            on_row=on_row,
        )
    _write_jsonl(out / "ablation.jsonl", lines)
    named = [
        (f"{variant} / {loss}", table.pooled(variant, loss))
        for loss in config.losses
        for variant in config.variants
    ]
    ReportTemplate.ablation_report("Composite structure comparison", named).write(
        config.report or out / "ablation.md"
    )
    return EXIT_OK


def cmd_sweep(config: RunConfig) -> int:
    out = _out_dir(config, "sweep")
    dataset = _load_dataset(config)
    lines: list[str] = []

    def on_row(row: SweepRow) -> None:
        line = row.model_dump_json()
        lines.append(line)
        echo(line)

    with group("Hyperparameter sweep"):
        rows = run_sweep(
            config.model_settings(),
            dataset.samples,
            dataset.vocab,
            config.learning_rates,
            config.hidden_sizes,
            on_row=on_row,
        )
    _write_jsonl(out / "sweep.jsonl", lines)
    ReportTemplate.sweep_report(
        "Hyperparameter sweep", [(r.learning_rate, r.hidden, r.metrics) for r in rows]
    ).write(config.report or out / "sweep.md")
    return EXIT_OK


# parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="flat key = value configuration file")
    common.add_argument("--seed", type=int, help="random seed")
    common.add_argument("--epochs", type=int, help="training epochs")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--verbose", action="store_true", help="print debug messages")
    common.add_argument("--workers", type=int, help="parallel workers")

    parser = _Parser(
        prog="callaudit",
        description="Detect unchecked external calls in Solidity call graphs.",
    )
    parser.add_argument("--version", action="version", version=f"callaudit {VERSION}")
    commands = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    extract = commands.add_parser("extract", parents=[common], help="Solidity sources to DOT")
    extract.add_argument("source_dir", type=Path)

    featurize_cmd = commands.add_parser(
        "featurize", parents=[common], help="build the featurized dataset cache"
    )
    featurize_cmd.add_argument("manifest", type=Path)
    featurize_cmd.add_argument("--cache", type=Path)

    train_cmd = commands.add_parser("train", parents=[common], help="train a classifier")
    train_cmd.add_argument("manifest", type=Path)
    train_cmd.add_argument("--cache", type=Path)
    train_cmd.add_argument("--checkpoint", type=Path, help="where to write the checkpoint")
    train_cmd.add_argument("--report", type=Path)

    eval_cmd = commands.add_parser("eval", parents=[common], help="evaluate a checkpoint")
    eval_cmd.add_argument("checkpoint", type=Path)
    eval_cmd.add_argument("manifest", type=Path)
    eval_cmd.add_argument("--report", type=Path)

    predict = commands.add_parser("predict", parents=[common], help="audit graphs or sources")
    predict.add_argument("checkpoint", type=Path)
    predict.add_argument("target", type=Path, help="DOT file, DOT directory or source directory")
    predict.add_argument("--report", type=Path)

    synthetic = commands.add_parser(
        "gen-synthetic", parents=[common], help="generate a labelled synthetic corpus"
    )
    synthetic.add_argument("--count", type=int, default=500)
    synthetic.add_argument("--min-nodes", type=int, default=5)
    synthetic.add_argument("--max-nodes", type=int, default=40)
    synthetic.add_argument("--external-probability", type=float, default=0.3)
    synthetic.add_argument("--motif-probability", type=float, default=0.5)

    ablate = commands.add_parser("ablate", parents=[common], help="compare model structures")
    ablate.add_argument("manifest", type=Path)
    ablate.add_argument("--cache", type=Path)
    ablate.add_argument("--variants", help="comma-separated structures")
    ablate.add_argument("--losses", help="comma-separated losses")
    ablate.add_argument("--seeds", help="comma-separated seeds")
    ablate.add_argument("--report", type=Path)

    sweep = commands.add_parser("sweep", parents=[common], help="learning rate x hidden size")
    sweep.add_argument("manifest", type=Path)
    sweep.add_argument("--cache", type=Path)
    sweep.add_argument("--learning-rates", help="comma-separated learning rates")
    sweep.add_argument("--hidden-sizes", help="comma-separated hidden sizes")
    sweep.add_argument("--report", type=Path)
    return parser


_CONFIG_FLAGS: tuple[str, ...] = (
    "seed",
    "epochs",
    "out",
    "workers",
    "manifest",
    "cache",
    "checkpoint",
    "report",
    "variants",
    "losses",
    "seeds",
    "learning_rates",
    "hidden_sizes",
)


def _overrides(args: argparse.Namespace) -> dict[str, Any]:
    overrides = {name: getattr(args, name, None) for name in _CONFIG_FLAGS}
    if args.command == "extract":
        overrides["source_dir"] = args.source_dir
    elif args.command == "predict":
        target: Path = args.target
        is_dot = target.is_file() or (target.is_dir() and any(target.glob("*.dot")))
        overrides["dot_dir" if is_dot else "source_dir"] = target
    return overrides


def _dispatch(args: argparse.Namespace, config: RunConfig) -> int:
    handlers: dict[str, Callable[[RunConfig], int]] = {
        "extract": cmd_extract,
        "featurize": cmd_featurize,
        "train": cmd_train,
        "eval": cmd_eval,
        "predict": cmd_predict,
        "ablate": cmd_ablate,
        "sweep": cmd_sweep,
    }
    if args.command == "gen-synthetic":
        try:
            spec = SyntheticSpec(
                count=args.count,
                min_nodes=args.min_nodes,
                max_nodes=args.max_nodes,
                external_edge_probability=args.external_probability,
                motif_probability=args.motif_probability,
                seed=config.seed,
            )
        except ValueError as e:
            raise ConfigurationError(f"invalid synthetic corpus settings: {e}") from e
        return cmd_gen_synthetic(config, spec)
    return handlers[args.command](config)


def main(argv: Sequence[str] | None = None) -> int:
    """
    Runs the command line.

    :returns: process exit code
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as e:
        error(str(e), title="usage")
        return EXIT_USAGE
    if args.verbose:
        print_messages.set_debug(True)
    try:
        config = load_config(args.config, _overrides(args))
        return _dispatch(args, config)
    except CancellationRequested as e:
        warning(str(e))
        return EXIT_USAGE
    except ConfigurationError as e:
        error(str(e), title="configuration")
        return EXIT_USAGE
    except DataError as e:
        error(str(e), title=type(e).__name__)
        return EXIT_DATA
    except CallAuditError as e:
        error(str(e))
        return EXIT_DATA
