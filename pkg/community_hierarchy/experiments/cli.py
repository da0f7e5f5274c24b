"""
Command-line front end.

Usage:
    python -m community_hierarchy generate --d 3 --a 40,60,80,100 --n 3200 --seed 1 --out data/
    python -m community_hierarchy fit --edges data/edges.tsv --method both --out data/fit
    python -m community_hierarchy score --truth-labels data/truth_labels.txt --truth-tree data/params.tsv \
        --pred-labels data/fit/bottom-up/labels.txt --pred-tree data/fit/bottom-up/tree.tsv
    python -m community_hierarchy thresholds --a 40,45,50,100
    python -m community_hierarchy phase-diagram --replicates 10 --jobs 8 --out results/
    python -m community_hierarchy robustness --betas 2 --etas 0.5 --scenarios uniform --out results/
    python -m community_hierarchy run --d 3 --a 10,30,40,130 --arity 3 --n 2700 --method both

Exit codes: 0 success, 1 invalid input, configuration or eigensolver failure, 2 I/O failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from ..detection.errors import HierarchyError, ValidationError
from ..detection.generator import sample_hsbm, tree_sbm_params
from ..detection.io import (
    dendrogram_from_json,
    read_edges,
    read_params,
    read_partition,
    read_tree,
    write_edges,
    write_params,
    write_partition,
)
from ..detection.linkage import dendrogram_from_tree
from ..detection.metrics import accuracy_at_depth, clustering_loss, count_inversions, tree_error_ratio
from ..detection.models import Method
from .config import ExperimentConfig, build_config, convert_value
from .job_pool import run_experiment
from .records import ExperimentKind
from .storage import format_cell, write_fit_artifacts
from .tasks import fit_graph

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s [%(levelname)s] %(name)s: %(message)s"
EXIT_OK = 0
EXIT_INVALID = 1
EXIT_IO = 2

# flag dest -> config key, values converted with the config file converters
_CONFIG_FLAGS = {
    "seed": "seed",
    "out": "output_dir",
    "jobs": "jobs",
    "replicates": "replicates",
    "db": "database_url",
    "d": "d",
    "arity": "arity",
    "a": "a",
    "n": "n",
    "method": "method",
    "min_size": "min_size",
    "dense_limit": "dense_limit",
    "a0": "a0",
    "a3": "a3",
    "grid_step": "grid_step",
    "cells": "cells",
    "betas": "betas",
    "etas": "etas",
    "scenarios": "scenarios",
    "base_probability": "base_probability",
}


class _ArgumentParser(argparse.ArgumentParser):
    """Turns usage errors into ValidationError so they share exit code 1."""

    def error(self, message: str):
        raise ValidationError(f"{self.prog}: {message}")


def configure_logging(level: str = "INFO", log_file: Optional[Path] = None) -> None:
    handlers: List[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    if log_file is not None:
        handlers.append(logging.FileHandler(log_file, encoding="utf-8"))
    logging.basicConfig(level=level.upper(), format=LOG_FORMAT, handlers=handlers, force=True)


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", default=None, help="Base seed (64-bit)")
    common.add_argument("--out", default=None, help="Output directory")
    common.add_argument("--jobs", default=None, help="Worker processes (default: available CPUs)")
    common.add_argument("--replicates", default=None, help="Replicates per grid cell")
    common.add_argument("--config", default=None, type=Path, help="key=value config file")
    common.add_argument("--db", default=None, help="SQLAlchemy URL; stores results and enables resume")
    common.add_argument("--log-level", default="INFO", help="Logging level")
    common.add_argument("--log-file", default=None, type=Path, help="Also log to this file")
    return common


def _model_parser() -> argparse.ArgumentParser:
    model = argparse.ArgumentParser(add_help=False)
    model.add_argument("--d", default=None, help="Tree depth")
    model.add_argument("--arity", default=None, help="Children per internal node")
    model.add_argument("--a", default=None, help="Comma separated a_0..a_d, p_k = a_k log N / N")
    model.add_argument("--n", default=None, help="Number of nodes")
    model.add_argument("--fixed-sizes", action="store_true", default=None, help="Equal community sizes")
    return model


def _fit_parser() -> argparse.ArgumentParser:
    fit = argparse.ArgumentParser(add_help=False)
    fit.add_argument("--method", default=None, choices=[m.value for m in Method], help="Detection method")
    fit.add_argument("--min-size", default=None, help="Top-down: smallest part that is split further")
    fit.add_argument("--dense-limit", default=None, help="Largest matrix solved with a dense eigensolver")
    return fit


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(prog="community_hierarchy", description="Hierarchical community detection on HSBMs")
    subparsers = parser.add_subparsers(dest="command", required=True)
    common, model, fit = _common_parser(), _model_parser(), _fit_parser()

    generate = subparsers.add_parser("generate", parents=[common, model], help="Sample an HSBM graph")
    generate.add_argument("--params", default=None, type=Path, help="Params file instead of --d/--arity/--a")

    fit_cmd = subparsers.add_parser("fit", parents=[common, fit], help="Fit a hierarchy to an edge list")
    fit_cmd.add_argument("--edges", required=True, type=Path, help="Edge list file")

    score = subparsers.add_parser("score", parents=[common], help="Score predicted labels and tree")
    score.add_argument("--truth-labels", required=True, type=Path)
    score.add_argument("--truth-tree", required=True, type=Path, help="Tree or params file")
    score.add_argument("--pred-labels", required=True, type=Path)
    score.add_argument("--pred-tree", required=True, type=Path)
    score.add_argument("--dendrogram", default=None, type=Path, help="Dendrogram JSON for the inversion count")
    score.add_argument("--edges", default=None, type=Path, help="Edge list; rebuilds merge heights of a binary tree")

    subparsers.add_parser("thresholds", parents=[common, model], help="Recovery thresholds per depth")

    phase = subparsers.add_parser("phase-diagram", parents=[common, model, fit], help="Exact recovery over (a1, a2)")
    phase.add_argument("--a0", default=None)
    phase.add_argument("--a3", default=None)
    phase.add_argument("--grid-step", default=None)
    phase.add_argument("--cells", default=None, help="Explicit cells 'a1,a2;a1,a2'")

    robustness = subparsers.add_parser("robustness", parents=[common, model], help="Linkage from corrupted labels")
    robustness.add_argument("--betas", default=None)
    robustness.add_argument("--etas", default=None)
    robustness.add_argument("--scenarios", default=None, help="uniform, adversarial, nearest")
    robustness.add_argument("--base-probability", default=None)

    subparsers.add_parser("run", parents=[common, model, fit], help="generate -> fit -> score with artifacts")
    return parser


def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
    values: Dict[str, Any] = {}
    for flag, key in _CONFIG_FLAGS.items():
        raw = getattr(args, flag, None)
        if raw is not None:
            values[key] = convert_value(key, str(raw))
    if getattr(args, "fixed_sizes", None):
        values["fixed_sizes"] = True
    return values


def _config_for(args: argparse.Namespace, kind: ExperimentKind) -> ExperimentConfig:
    base = ExperimentConfig(kind=kind)
    if kind is ExperimentKind.SINGLE_RUN:
        base = base.with_overrides({"replicates": 1})
    return build_config(file_path=args.config, overrides=_overrides(args), base=base)


def _print_csv(path: Path) -> None:
    sys.stdout.write(Path(path).read_text(encoding="utf-8"))


def cmd_generate(args: argparse.Namespace) -> None:
    config = _config_for(args, ExperimentKind.SINGLE_RUN)
    n = config.resolved_n
    params = read_params(args.params) if args.params else tree_sbm_params(config.arity, config.d, config.a, n)
    graph, truth = sample_hsbm(params, n, config.seed, fixed_sizes=config.fixed_sizes)
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_params(params, out / "params.tsv")
    write_edges(graph, out / "edges.tsv")
    write_partition(truth, out / "truth_labels.txt")
    logger.info("sampled %d nodes, %d edges, %d communities into %s", n, graph.number_of_edges, truth.K, out)


def cmd_fit(args: argparse.Namespace) -> None:
    config = _config_for(args, ExperimentKind.SINGLE_RUN)
    graph = read_edges(args.edges)
    out = Path(config.output_dir)
    for method in config.methods:
        fit = fit_graph(graph, method, config.seed, min_size=config.min_size, dense_limit=config.dense_limit)
        write_fit_artifacts(out / method.value, fit.labels, fit.tree, fit.dendrogram)
        logger.info("%s: %d clusters, tree depth %d", method.value, fit.labels.K, fit.tree.depth)


def score_rows(args: argparse.Namespace) -> List[Dict[str, Any]]:
    truth = read_partition(args.truth_labels)
    truth_tree = read_tree(args.truth_tree)
    pred = read_partition(args.pred_labels)
    pred_tree = read_tree(args.pred_tree)
    if args.dendrogram is not None:
        dendrogram = dendrogram_from_json(Path(args.dendrogram).read_text(encoding="utf-8"))
        inversions: Optional[int] = count_inversions(dendrogram)
    elif args.edges is not None and pred_tree.is_binary():
        inversions = count_inversions(dendrogram_from_tree(read_edges(args.edges), pred, pred_tree))
    else:
        inversions = None
    row: Dict[str, Any] = {
        "loss": clustering_loss(truth, pred),
        "clusters": pred.K,
        "r_s": tree_error_ratio(truth_tree, pred_tree, truth, pred_labels=pred),
        "inversions": inversions,
    }
    for q in range(1, truth_tree.depth + 1):
        row[f"accuracy_{q}"] = accuracy_at_depth(truth, truth_tree, pred, pred_tree, q)
    return [row]


def cmd_score(args: argparse.Namespace) -> None:
    rows = score_rows(args)
    columns = list(rows[0].keys())
    lines = [",".join(columns)] + [",".join(format_cell(row[c]) for c in columns) for row in rows]
    text = "\n".join(lines) + "\n"
    if args.out:
        target = Path(args.out)
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(text, encoding="utf-8")
        logger.info("wrote scores to %s", target)
    sys.stdout.write(text)


def cmd_experiment(args: argparse.Namespace, kind: ExperimentKind) -> None:
    config = _config_for(args, kind)
    run = run_experiment(config)
    logger.info("run %s finished with state=%s", run.id, run.state.value)
    if run.output_path:
        print(run.output_path)
        if kind is ExperimentKind.THRESHOLDS:
            _print_csv(Path(run.output_path))


_EXPERIMENTS = {
    "thresholds": ExperimentKind.THRESHOLDS,
    "phase-diagram": ExperimentKind.PHASE_DIAGRAM,
    "robustness": ExperimentKind.ROBUSTNESS,
    "run": ExperimentKind.SINGLE_RUN,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        configure_logging(args.log_level, args.log_file)
        if args.command == "generate":
            cmd_generate(args)
        elif args.command == "fit":
            cmd_fit(args)
        elif args.command == "score":
            cmd_score(args)
        else:
            cmd_experiment(args, _EXPERIMENTS[args.command])
    except (ValueError, HierarchyError) as exc:
        # validation, argument conversion and eigensolver failures
        logger.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        logger.error("I/O failure on %s: %s", getattr(exc, "filename", None) or "?", exc)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
