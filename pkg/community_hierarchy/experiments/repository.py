from __future__ import annotations

import json
from copy import deepcopy
from typing import Dict, Iterable, List, Optional

from sqlalchemy import Column, DateTime, Enum, Integer, String, Text, create_engine, select, update
from sqlalchemy.orm import Session, declarative_base, sessionmaker

from .records import ExperimentKind, ExperimentRunRecord, ReplicateResult, RunPhase, RunState

Base = declarative_base()


class ExperimentRunModel(Base):
    __tablename__ = "experiment_runs"
    id = Column(String, primary_key=True)
    kind = Column(Enum(ExperimentKind))
    state = Column(Enum(RunState))
    phase = Column(Enum(RunPhase))
    total_tasks = Column(Integer)
    completed_tasks = Column(Integer)
    error_message = Column(String)
    output_path = Column(String)
    started_at = Column(DateTime)
    updated_at = Column(DateTime)
    config_json = Column(Text)


class ReplicateResultModel(Base):
    __tablename__ = "replicate_results"
    id = Column(String, primary_key=True)
    run_id = Column(String, index=True)
    cell_key = Column(String)
    method = Column(String)
    replicate = Column(Integer)
    seed = Column(String)  # unsigned 64-bit, beyond SQL BIGINT
    metrics_json = Column(Text)
    cell_json = Column(Text)
    created_at = Column(DateTime)


class ResultsRepository:
    """
    Persistence boundary for experiment runs and their per-replicate scores. Implementations
    can target SQLite/Postgres or any other backing store.
    """

    # Run operations
    def get_run(self, run_id: str) -> Optional[ExperimentRunRecord]:
        raise NotImplementedError

    def save_run(self, run: ExperimentRunRecord) -> None:
        raise NotImplementedError

    def update_run(
        self,
        run_id: str,
        state: Optional[RunState] = None,
        phase: Optional[RunPhase] = None,
        total_tasks: Optional[int] = None,
        completed_tasks: Optional[int] = None,
        error_message: Optional[str] = None,
        output_path: Optional[str] = None,
    ) -> None:
        raise NotImplementedError

    def list_runs(self) -> List[ExperimentRunRecord]:
        raise NotImplementedError

    # Result operations
    def upsert_results(self, results: Iterable[ReplicateResult]) -> None:
        raise NotImplementedError

    def list_results(self, run_id: str) -> List[ReplicateResult]:
        raise NotImplementedError

    def delete_run(self, run_id: str) -> None:
        raise NotImplementedError


class InMemoryResultsRepository(ResultsRepository):
    """
    In-memory store for local runs and tests. It mirrors the DB shape and keeps copies of
    the records to avoid cross-mutation between calls.
    """

    def __init__(self):
        self.runs: Dict[str, ExperimentRunRecord] = {}
        self.results: Dict[str, ReplicateResult] = {}

    def _clone(self, obj):
        return deepcopy(obj)

    def get_run(self, run_id: str) -> Optional[ExperimentRunRecord]:
        run = self.runs.get(run_id)
        return self._clone(run) if run else None

    def save_run(self, run: ExperimentRunRecord) -> None:
        self.runs[run.id] = self._clone(run)

    def update_run(
        self,
        run_id: str,
        state: Optional[RunState] = None,
        phase: Optional[RunPhase] = None,
        total_tasks: Optional[int] = None,
        completed_tasks: Optional[int] = None,
        error_message: Optional[str] = None,
        output_path: Optional[str] = None,
    ) -> None:
        run = self.runs.get(run_id)
        if not run:
            raise KeyError(f"Experiment run not found: {run_id}")
        if state is not None:
            run.state = state
        if phase is not None:
            run.phase = phase
        if total_tasks is not None:
            run.total_tasks = total_tasks
        if completed_tasks is not None:
            run.completed_tasks = completed_tasks
        if error_message is not None:
            run.error_message = error_message
        if output_path is not None:
            run.output_path = output_path
        self.runs[run_id] = self._clone(run)

    def list_runs(self) -> List[ExperimentRunRecord]:
        return [self._clone(run) for run in sorted(self.runs.values(), key=lambda r: r.id)]

    def upsert_results(self, results: Iterable[ReplicateResult]) -> None:
        for result in results:
            self.results[result.id] = self._clone(result)

    def list_results(self, run_id: str) -> List[ReplicateResult]:
        matching = [r for r in self.results.values() if r.run_id == run_id]
        return [self._clone(r) for r in sorted(matching, key=lambda r: r.id)]

    def delete_run(self, run_id: str) -> None:
        self.runs.pop(run_id, None)
        for key in [k for k, r in self.results.items() if r.run_id == run_id]:
            del self.results[key]


class SqlAlchemyResultsRepository(ResultsRepository):
    """
    SQL-backed repository using SQLAlchemy. Works with SQLite/Postgres URLs.
    """

    def __init__(self, database_url: str):
        self.engine = create_engine(database_url, future=True)
        Base.metadata.create_all(self.engine)
        self.SessionLocal = sessionmaker(bind=self.engine, expire_on_commit=False, future=True)

    def _session(self) -> Session:
        return self.SessionLocal()

    # region Run operations
    @staticmethod
    def _to_run_record(model: ExperimentRunModel) -> ExperimentRunRecord:
        return ExperimentRunRecord(
            id=model.id,
            kind=model.kind,
            state=model.state,
            phase=model.phase,
            total_tasks=int(model.total_tasks or 0),
            completed_tasks=int(model.completed_tasks or 0),
            error_message=model.error_message,
            output_path=model.output_path,
            started_at=model.started_at,
            updated_at=model.updated_at,
            config_json=json.loads(model.config_json or "{}"),
        )

    def get_run(self, run_id: str) -> Optional[ExperimentRunRecord]:
        with self._session() as session:
            model = session.get(ExperimentRunModel, run_id)
            if not model:
                return None
            return self._to_run_record(model)

    def save_run(self, run: ExperimentRunRecord) -> None:
        with self._session() as session:
            model = ExperimentRunModel(
                id=run.id,
                kind=run.kind,
                state=run.state,
                phase=run.phase,
                total_tasks=run.total_tasks,
                completed_tasks=run.completed_tasks,
                error_message=run.error_message,
                output_path=run.output_path,
                started_at=run.started_at,
                updated_at=run.updated_at,
                config_json=json.dumps(run.config_json or {}),
            )
            session.merge(model)
            session.commit()

    def update_run(
        self,
        run_id: str,
        state: Optional[RunState] = None,
        phase: Optional[RunPhase] = None,
        total_tasks: Optional[int] = None,
        completed_tasks: Optional[int] = None,
        error_message: Optional[str] = None,
        output_path: Optional[str] = None,
    ) -> None:
        with self._session() as session:
            stmt = update(ExperimentRunModel).where(ExperimentRunModel.id == run_id)
            values = {}
            if state is not None:
                values["state"] = state
            if phase is not None:
                values["phase"] = phase
            if total_tasks is not None:
                values["total_tasks"] = total_tasks
            if completed_tasks is not None:
                values["completed_tasks"] = completed_tasks
            if error_message is not None:
                values["error_message"] = error_message
            if output_path is not None:
                values["output_path"] = output_path
            if values:
                stmt = stmt.values(**values)
                result = session.execute(stmt)
                session.commit()
                if result.rowcount == 0:
                    raise ValueError(f"Experiment run not found: {run_id}")

    def list_runs(self) -> List[ExperimentRunRecord]:
        with self._session() as session:
            models = session.scalars(select(ExperimentRunModel).order_by(ExperimentRunModel.id)).all()
            return [self._to_run_record(model) for model in models]

    # endregion

    # region Result operations
    def upsert_results(self, results: Iterable[ReplicateResult]) -> None:
        with self._session() as session:
            for result in results:
                session.merge(
                    ReplicateResultModel(
                        id=result.id,
                        run_id=result.run_id,
                        cell_key=result.cell_key,
                        method=result.method,
                        replicate=result.replicate,
                        seed=str(result.seed),
                        metrics_json=json.dumps(result.metrics),
                        cell_json=json.dumps(result.cell),
                        created_at=result.created_at,
                    )
                )
            session.commit()

    def list_results(self, run_id: str) -> List[ReplicateResult]:
        with self._session() as session:
            stmt = (
                select(ReplicateResultModel)
                .where(ReplicateResultModel.run_id == run_id)
                .order_by(ReplicateResultModel.id)
            )
            return [
                ReplicateResult(
                    run_id=model.run_id,
                    cell_key=model.cell_key,
                    method=model.method,
                    replicate=int(model.replicate),
                    seed=int(model.seed),
                    metrics=json.loads(model.metrics_json or "{}"),
                    cell=json.loads(model.cell_json or "{}"),
                    created_at=model.created_at,
                )
                for model in session.scalars(stmt).all()
            ]

    def delete_run(self, run_id: str) -> None:
        with self._session() as session:
            session.query(ReplicateResultModel).filter(ReplicateResultModel.run_id == run_id).delete()
            model = session.get(ExperimentRunModel, run_id)
            if model:
                session.delete(model)
            session.commit()

    # endregion
