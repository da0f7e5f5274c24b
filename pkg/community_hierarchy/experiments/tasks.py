"""
Pure per-replicate tasks and their aggregation into plot-ready rows.

A task samples one graph, fits it with every configured method and returns the scores; it
touches no repository or filesystem, so it can run in any worker process. Seeds: a grid
cell gets `cell_seed(base_seed, cell_key)` (blake2b of "base_seed:cell_key", first 8 bytes,
unsigned) and replicate r uses cell_seed + r mod 2^64. Adding cells never moves the seeds of
existing ones.
"""

from __future__ import annotations

import hashlib
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np

from ..detection.clusterers import BetheHessianClusterer, PlantedClusterer
from ..detection.generator import (
    corrupt_leaf_ids,
    geometric_btsbm_params,
    make_profile,
    sample_hsbm,
    surviving_leaves,
    tree_sbm_params,
)
from ..detection.linkage import bottom_up_hcd, labels_on_tree, leaf_assignment, tree_from_dendrogram
from ..detection.metrics import accuracy_at_depth, clustering_loss, count_inversions, tree_error_ratio
from ..detection.models import CommunityTree, Dendrogram, Graph, Method, NoiseKind, Partition
from ..detection.spectral import top_down_dendrogram
from ..detection.theory import (
    eta_minus,
    expected_linkage_recovery,
    feasible_depths,
    monotone_profile_condition,
    predict_tree_recovery,
)
from .config import ExperimentConfig
from .records import ExperimentKind, ReplicateResult

logger = logging.getLogger(__name__)

SEED_MODULUS = 2**64

PHASE_COLUMNS = (
    "a1",
    "a2",
    "method",
    "depth",
    "replicates",
    "mean_accuracy",
    "exact_count",
    "exact_recovery",
    "J_td",
    "J_bu",
    "predicted_recovery",
    "mean_inversions",
)
ROBUSTNESS_COLUMNS = (
    "beta",
    "eta",
    "scenario",
    "replicates",
    "mean_r_s",
    "exact_count",
    "exact_recovery",
    "mean_changed_fraction",
    "predicted_recovery",
    "expected_recovery",
    "monotone_profile_condition",
    "eta_minus",
    "bound_recovery",
    "mean_inversions",
)


def cell_seed(base_seed: int, cell_key: str) -> int:
    digest = hashlib.blake2b(f"{base_seed}:{cell_key}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big", signed=False)


def replicate_seed(seed: int, replicate: int) -> int:
    return (int(seed) + int(replicate)) % SEED_MODULUS


@dataclass(frozen=True)
class FitResult:
    method: Method
    labels: Partition
    tree: CommunityTree
    dendrogram: Dendrogram


@dataclass(frozen=True)
class ReplicateTask:
    run_id: str
    cell_key: str
    cell: Dict[str, Any]
    replicate: int
    seed: int
    config: ExperimentConfig = field(repr=False)

    @property
    def key(self) -> Tuple[str, int]:
        return (self.cell_key, self.replicate)


def fit_graph(graph: Graph, method: Method, seed: int, min_size: int = 20, dense_limit: int = 2048) -> FitResult:
    """One detection method on a graph; labels always index the leaves of the returned tree."""
    if method is Method.BOTTOM_UP:
        _, dendrogram = bottom_up_hcd(graph, BetheHessianClusterer(seed=seed, dense_limit=dense_limit))
        return FitResult(method, labels_on_tree(dendrogram), tree_from_dendrogram(dendrogram), dendrogram)
    if method is Method.TOP_DOWN:
        labels, tree, dendrogram = top_down_dendrogram(graph, min_size=min_size, dense_limit=dense_limit)
        return FitResult(method, labels, tree, dendrogram)
    raise ValueError(f"fit one method at a time, got {method}")


def score_fit(truth: Partition, truth_tree: CommunityTree, fit: FitResult, depths: int) -> Dict[str, float]:
    metrics: Dict[str, float] = {
        "loss": float(clustering_loss(truth, fit.labels)),
        "clusters": float(fit.labels.K),
        "r_s": tree_error_ratio(truth_tree, fit.tree, truth, pred_labels=fit.labels),
        "inversions": float(count_inversions(fit.dendrogram)),
    }
    for q in range(1, depths + 1):
        metrics[f"accuracy_{q}"] = accuracy_at_depth(truth, truth_tree, fit.labels, fit.tree, q)
    return metrics


def _phase_key(a1: float, a2: float) -> str:
    return f"a1={a1!r},a2={a2!r}"


def _robustness_key(beta: float, eta: float, scenario: NoiseKind) -> str:
    return f"beta={beta!r},eta={eta!r},scenario={scenario.value}"


def plan_tasks(config: ExperimentConfig, run_id: str) -> List[ReplicateTask]:
    cells: List[Tuple[str, Dict[str, Any]]] = []
    if config.kind is ExperimentKind.PHASE_DIAGRAM:
        cells = [(_phase_key(a1, a2), {"a1": a1, "a2": a2}) for a1, a2 in config.grid()]
    elif config.kind is ExperimentKind.ROBUSTNESS:
        cells = [
            (_robustness_key(beta, eta, scenario), {"beta": beta, "eta": eta, "scenario": scenario.value})
            for beta in config.betas
            for eta in config.etas
            for scenario in config.scenarios
        ]
    else:
        raise ValueError(f"{config.kind.value} runs are not split into replicate tasks")
    tasks = []
    for key, cell in cells:
        base = cell_seed(config.seed, key)
        for replicate in range(config.replicates):
            tasks.append(ReplicateTask(run_id, key, cell, replicate, replicate_seed(base, replicate), config))
    return tasks


def _phase_task(task: ReplicateTask) -> List[ReplicateResult]:
    config = task.config
    n = config.resolved_n
    a = (config.a0, task.cell["a1"], task.cell["a2"], config.a3)
    params = tree_sbm_params(config.arity, config.d, a, n)
    graph, truth = sample_hsbm(params, n, task.seed, fixed_sizes=config.fixed_sizes)
    results = []
    for method in config.methods:
        fit = fit_graph(graph, method, task.seed, min_size=config.min_size, dense_limit=config.dense_limit)
        metrics = score_fit(truth, params.tree, fit, config.d)
        results.append(
            ReplicateResult(task.run_id, task.cell_key, method.value, task.replicate, task.seed, metrics, dict(task.cell))
        )
    return results


def _robustness_task(task: ReplicateTask) -> List[ReplicateResult]:
    config = task.config
    n = config.resolved_n
    params = geometric_btsbm_params(config.d, task.cell["beta"], base=config.base_probability)
    graph, truth = sample_hsbm(params, n, task.seed, fixed_sizes=config.fixed_sizes)
    profile = make_profile(task.cell["scenario"], task.cell["eta"], config.d)
    # truth labels are leaf ids here: sample_hsbm rejects empty leaves
    leaf_ids = corrupt_leaf_ids(truth, params.tree, profile, task.seed)
    truth_leaves = surviving_leaves(leaf_ids, params.tree)
    if len(truth_leaves) < params.tree.K:
        logger.warning(
            "%s replicate %d: corruption emptied %d leaves",
            task.cell_key,
            task.replicate,
            params.tree.K - len(truth_leaves),
        )
    corrupted, dendrogram = bottom_up_hcd(graph, PlantedClusterer(Partition(leaf_ids)))
    pred_tree = tree_from_dendrogram(dendrogram)
    metrics = {
        "r_s": tree_error_ratio(
            params.tree,
            pred_tree,
            corrupted,
            pred_leaves=leaf_assignment(dendrogram),
            truth_leaves=truth_leaves,
        ),
        "changed_fraction": float(np.mean(leaf_ids != truth.labels)),
        "inversions": float(count_inversions(dendrogram)),
    }
    return [
        ReplicateResult(
            task.run_id, task.cell_key, Method.BOTTOM_UP.value, task.replicate, task.seed, metrics, dict(task.cell)
        )
    ]


def run_task(task: ReplicateTask) -> List[ReplicateResult]:
    """Process-pool entrypoint."""
    logger.debug("running %s replicate %d (seed %d)", task.cell_key, task.replicate, task.seed)
    if task.config.kind is ExperimentKind.PHASE_DIAGRAM:
        return _phase_task(task)
    return _robustness_task(task)


def _group(results: Sequence[ReplicateResult]) -> Dict[Tuple[str, str], List[ReplicateResult]]:
    groups: Dict[Tuple[str, str], List[ReplicateResult]] = defaultdict(list)
    for result in sorted(results, key=lambda r: (r.cell_key, r.method, r.replicate)):
        groups[(result.cell_key, result.method)].append(result)
    return groups


def _mean(values: Sequence[float]) -> float:
    return float(np.mean(values)) if values else float("nan")


def aggregate_phase_diagram(config: ExperimentConfig, results: Sequence[ReplicateResult]) -> List[Dict[str, Any]]:
    rows = []
    for (_, method), group in _group(results).items():
        a1, a2 = float(group[0].cell["a1"]), float(group[0].cell["a2"])
        report = feasible_depths((config.a0, a1, a2, config.a3)) if config.arity == 2 else None
        inversions = _mean([r.metrics["inversions"] for r in group])
        for q in range(1, config.d + 1):
            accuracies = [r.metrics[f"accuracy_{q}"] for r in group]
            exact = sum(1 for value in accuracies if value == 1.0)
            row = {
                "a1": a1,
                "a2": a2,
                "method": method,
                "depth": q,
                "replicates": len(group),
                "mean_accuracy": _mean(accuracies),
                "exact_count": exact,
                "exact_recovery": exact == len(group),
                "mean_inversions": inversions,
            }
            if report is not None:
                record = report.at(q)
                row["J_td"] = record.J_td
                row["J_bu"] = record.J_bu
                row["predicted_recovery"] = record.feasible_bu if method == Method.BOTTOM_UP.value else record.feasible_td
            rows.append(row)
    return sorted(rows, key=lambda row: (row["a1"], row["a2"], row["method"], row["depth"]))


def aggregate_robustness(config: ExperimentConfig, results: Sequence[ReplicateResult]) -> List[Dict[str, Any]]:
    rows = []
    for _, group in _group(results).items():
        cell = group[0].cell
        beta, eta, scenario = float(cell["beta"]), float(cell["eta"]), NoiseKind(cell["scenario"])
        params = geometric_btsbm_params(config.d, beta, base=config.base_probability)
        p = [params.p[params.tree.nodes_at_depth(k)[0]] for k in range(config.d + 1)]
        profile = make_profile(scenario, eta, config.d)
        ratios = [r.metrics["r_s"] for r in group]
        exact = sum(1 for value in ratios if value == 0.0)
        row = {
            "beta": beta,
            "eta": eta,
            "scenario": scenario.value,
            "replicates": len(group),
            "mean_r_s": _mean(ratios),
            "exact_count": exact,
            "exact_recovery": exact == len(group),
            "mean_changed_fraction": _mean([r.metrics["changed_fraction"] for r in group]),
            "predicted_recovery": predict_tree_recovery(config.d, p, profile),
            "expected_recovery": expected_linkage_recovery(config.d, p, profile),
            "monotone_profile_condition": monotone_profile_condition(profile),
            "mean_inversions": _mean([r.metrics["inversions"] for r in group]),
        }
        if scenario is NoiseKind.ADVERSARIAL:
            bound = eta_minus(config.d, p)
            row["eta_minus"] = bound
            row["bound_recovery"] = eta < (0.5 if bound is None else bound)
        rows.append(row)
    return sorted(rows, key=lambda row: (row["beta"], row["eta"], row["scenario"]))
