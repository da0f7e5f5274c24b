from __future__ import annotations

import logging
import multiprocessing
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterator, Optional, Sequence, TypeVar

from .config import ExperimentConfig
from .records import ExperimentRunRecord
from .repository import InMemoryResultsRepository, ResultsRepository, SqlAlchemyResultsRepository
from .storage import LocalRunStorage, StoragePaths

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


@dataclass
class WorkerConfig:
    output_dir: str
    database_url: Optional[str] = None
    jobs: int = 1


class LocalTaskPool:
    """
    Bounded pool of worker processes. Results are yielded as tasks finish, so callers can persist
    them one by one; with a single job everything runs inline in the calling process.
    """

    def __init__(self, jobs: int = 1):
        if jobs < 1:
            raise ValueError(f"jobs must be >= 1, got {jobs}")
        self.jobs = jobs

    def imap(self, fn: Callable[[T], R], items: Sequence[T]) -> Iterator[R]:
        if self.jobs == 1 or len(items) <= 1:
            for item in items:
                yield fn(item)
            return
        processes = min(self.jobs, len(items))
        logger.info("dispatching %d tasks to %d processes", len(items), processes)
        pool = multiprocessing.Pool(processes=processes)
        try:
            for result in pool.imap_unordered(fn, items):
                yield result
            pool.close()
        except BaseException:
            pool.terminate()
            raise
        finally:
            pool.join()


def build_repository(database_url: Optional[str]) -> ResultsRepository:
    if database_url:
        return SqlAlchemyResultsRepository(database_url)
    return InMemoryResultsRepository()


def run_experiment(
    config: ExperimentConfig,
    repository: Optional[ResultsRepository] = None,
    worker_config: Optional[WorkerConfig] = None,
) -> ExperimentRunRecord:
    """
    Entrypoint shared by the CLI and scripts. Creates the repository, storage and pool for a
    config and drives the run to completion.
    """
    from .worker import ExperimentWorker

    worker_config = worker_config or WorkerConfig(
        output_dir=config.output_dir, database_url=config.database_url, jobs=config.jobs
    )
    repo = repository or build_repository(worker_config.database_url)
    storage = LocalRunStorage(StoragePaths(Path(worker_config.output_dir)))
    worker = ExperimentWorker(repository=repo, storage=storage, pool=LocalTaskPool(worker_config.jobs))
    return worker.run(config)

