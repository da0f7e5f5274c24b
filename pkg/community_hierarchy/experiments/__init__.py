"""
Experiments subsystem exports.
"""

from .config import ExperimentConfig, build_config, load_config_file, parse_config_text
from .job_pool import LocalTaskPool, WorkerConfig, run_experiment
from .records import ExperimentKind, ExperimentRunRecord, ReplicateResult, RunPhase, RunState
from .repository import InMemoryResultsRepository, ResultsRepository, SqlAlchemyResultsRepository
from .storage import LocalRunStorage, StoragePaths
from .tasks import (
    FitResult,
    ReplicateTask,
    aggregate_phase_diagram,
    aggregate_robustness,
    cell_seed,
    fit_graph,
    plan_tasks,
    run_task,
    score_fit,
)
from .worker import ExperimentWorker

__all__ = [
    "ExperimentConfig",
    "ExperimentKind",
    "ExperimentRunRecord",
    "ExperimentWorker",
    "FitResult",
    "InMemoryResultsRepository",
    "LocalRunStorage",
    "LocalTaskPool",
    "ReplicateResult",
    "ReplicateTask",
    "ResultsRepository",
    "RunPhase",
    "RunState",
    "SqlAlchemyResultsRepository",
    "StoragePaths",
    "WorkerConfig",
    "aggregate_phase_diagram",
    "aggregate_robustness",
    "build_config",
    "cell_seed",
    "fit_graph",
    "load_config_file",
    "parse_config_text",
    "plan_tasks",
    "run_experiment",
    "run_task",
    "score_fit",
]
