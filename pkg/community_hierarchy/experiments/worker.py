from __future__ import annotations

import logging
from pathlib import Path
from typing import Any, Dict, List, Optional

from ..detection.generator import sample_hsbm, tree_sbm_params
from ..detection.theory import feasible_depths
from .config import ExperimentConfig
from .job_pool import LocalTaskPool
from .records import ExperimentKind, ExperimentRunRecord, ReplicateResult, RunPhase, RunState
from .repository import ResultsRepository
from .storage import LocalRunStorage
from .tasks import (
    PHASE_COLUMNS,
    ROBUSTNESS_COLUMNS,
    SEED_MODULUS,
    aggregate_phase_diagram,
    aggregate_robustness,
    fit_graph,
    plan_tasks,
    run_task,
    score_fit,
)

logger = logging.getLogger(__name__)

THRESHOLD_COLUMNS = ("q", "I_q", "scaled_I_q", "J_td", "J_bu", "feasible_td", "feasible_bu")
SINGLE_CELL = "single"


def single_columns(d: int) -> tuple:
    return ("replicate", "seed", "method", "loss", "clusters", "r_s", "inversions") + tuple(
        f"accuracy_{q}" for q in range(1, d + 1)
    )


class ExperimentWorker:
    """
    Drives an experiment run through planning -> replicates -> aggregation -> writing.
    The worker is stateless: run state and per-replicate scores live in the repository,
    files go through the storage adapter. Re-running a config resumes its run.
    """

    def __init__(
        self,
        repository: ResultsRepository,
        storage: LocalRunStorage,
        pool: Optional[LocalTaskPool] = None,
    ):
        self.repo = repository
        self.storage = storage
        self.pool = pool or LocalTaskPool(1)

    def run(self, config: ExperimentConfig) -> ExperimentRunRecord:
        config.validate()
        run_id = config.run_id()
        run = self.repo.get_run(run_id)
        if run is None:
            run = ExperimentRunRecord(
                id=run_id,
                kind=config.kind,
                state=RunState.QUEUED,
                phase=RunPhase.PLANNING,
                config_json=config.result_fields(),
            )
            self.repo.save_run(run)
        elif run.state is RunState.COMPLETED:
            logger.info("run %s already completed; rewriting its outputs", run_id)

        try:
            self.repo.update_run(run_id, state=RunState.RUNNING, phase=RunPhase.PLANNING)
            self.storage.write_config(run_id, config.result_fields())
            if config.kind is ExperimentKind.THRESHOLDS:
                output = self._run_thresholds(run_id, config)
            elif config.kind is ExperimentKind.SINGLE_RUN:
                output = self._run_single(run_id, config)
            else:
                output = self._run_grid(run_id, config)
            if output is None:
                return self.repo.get_run(run_id)
            self.repo.update_run(run_id, state=RunState.COMPLETED, output_path=str(output))
        except Exception as exc:  # noqa: BLE001
            self.repo.update_run(run_id, state=RunState.FAILED, error_message=str(exc))
            raise
        return self.repo.get_run(run_id)

    def _should_stop(self, run_id: str) -> bool:
        run = self.repo.get_run(run_id)
        return bool(run and run.state in {RunState.PAUSED, RunState.FAILED})

    # region Grid experiments
    def _run_grid(self, run_id: str, config: ExperimentConfig) -> Optional[Path]:
        tasks = plan_tasks(config, run_id)
        done = {result.task_key for result in self.repo.list_results(run_id)}
        pending = [task for task in tasks if task.key not in done]
        completed = len(tasks) - len(pending)
        if completed:
            logger.info("resuming %s: %d of %d replicates already stored", run_id, completed, len(tasks))
        self.repo.update_run(
            run_id, phase=RunPhase.REPLICATES, total_tasks=len(tasks), completed_tasks=completed
        )

        # Persist per task so an interrupted run keeps its finished replicates.
        for results in self.pool.imap(run_task, pending):
            self.repo.upsert_results(results)
            completed += 1
            self.repo.update_run(run_id, completed_tasks=completed)
            if self._should_stop(run_id):
                logger.info("run %s stopped after %d of %d replicates", run_id, completed, len(tasks))
                return None

        self.repo.update_run(run_id, phase=RunPhase.AGGREGATION)
        results = self.repo.list_results(run_id)
        if config.kind is ExperimentKind.PHASE_DIAGRAM:
            name, columns, rows = "phase_diagram", PHASE_COLUMNS, aggregate_phase_diagram(config, results)
        else:
            name, columns, rows = "robustness", ROBUSTNESS_COLUMNS, aggregate_robustness(config, results)

        self.repo.update_run(run_id, phase=RunPhase.WRITING)
        return self.storage.write_csv(run_id, name, columns, rows)

    # endregion

    def _run_thresholds(self, run_id: str, config: ExperimentConfig) -> Path:
        report = feasible_depths(config.a, n=config.n)
        rows = [
            {
                "q": record.q,
                "I_q": record.I_q,
                "scaled_I_q": record.scaled_I_q,
                "J_td": record.J_td,
                "J_bu": record.J_bu,
                "feasible_td": record.feasible_td,
                "feasible_bu": record.feasible_bu,
            }
            for record in report.depths
        ]
        self.repo.update_run(run_id, phase=RunPhase.WRITING, total_tasks=1, completed_tasks=1)
        return self.storage.write_csv(run_id, "thresholds", THRESHOLD_COLUMNS, rows)

    def _run_single(self, run_id: str, config: ExperimentConfig) -> Path:
        """generate -> fit -> score; artifacts are kept for replicate 0, scores for every replicate."""
        n = config.resolved_n
        params = tree_sbm_params(config.arity, config.d, config.a, n)
        self.repo.update_run(run_id, phase=RunPhase.REPLICATES, total_tasks=config.replicates, completed_tasks=0)
        rows: List[Dict[str, Any]] = []
        for replicate in range(config.replicates):
            seed = (config.seed + replicate) % SEED_MODULUS
            graph, truth = sample_hsbm(params, n, seed, fixed_sizes=config.fixed_sizes)
            if replicate == 0:
                self.storage.write_instance(run_id, params, graph, truth)
            results = []
            for method in config.methods:
                fit = fit_graph(graph, method, seed, min_size=config.min_size, dense_limit=config.dense_limit)
                if replicate == 0:
                    self.storage.write_fit(run_id, method.value, fit.labels, fit.tree, fit.dendrogram)
                metrics = score_fit(truth, params.tree, fit, config.d)
                results.append(
                    ReplicateResult(run_id, SINGLE_CELL, method.value, replicate, seed, metrics, {})
                )
                rows.append({"replicate": replicate, "seed": seed, "method": method.value, **metrics})
            self.repo.upsert_results(results)
            self.repo.update_run(run_id, completed_tasks=replicate + 1)
        self.repo.update_run(run_id, phase=RunPhase.WRITING)
        rows.sort(key=lambda row: (row["replicate"], row["method"]))
        return self.storage.write_csv(run_id, "scores", single_columns(config.d), rows)
