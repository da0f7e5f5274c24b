from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from typing import Any, Dict, Optional


class ExperimentKind(str, Enum):
    PHASE_DIAGRAM = "phase-diagram"
    ROBUSTNESS = "robustness"
    SINGLE_RUN = "single-run"
    THRESHOLDS = "thresholds"


class RunState(str, Enum):
    QUEUED = "queued"
    RUNNING = "running"
    PAUSED = "paused"
    COMPLETED = "completed"
    FAILED = "failed"


class RunPhase(str, Enum):
    PLANNING = "planning"
    REPLICATES = "replicates"
    AGGREGATION = "aggregation"
    WRITING = "writing"


@dataclass
class ExperimentRunRecord:
    id: str
    kind: ExperimentKind
    state: RunState
    phase: RunPhase
    total_tasks: int = 0
    completed_tasks: int = 0
    error_message: Optional[str] = None
    output_path: Optional[str] = None
    started_at: Optional[datetime] = None
    updated_at: datetime = field(default_factory=datetime.utcnow)
    config_json: Dict[str, Any] = field(default_factory=dict)


@dataclass
class ReplicateResult:
    """Scores of one method on one sampled replicate of one grid cell."""

    run_id: str
    cell_key: str
    method: str
    replicate: int
    seed: int
    metrics: Dict[str, float] = field(default_factory=dict)
    cell: Dict[str, Any] = field(default_factory=dict)
    created_at: datetime = field(default_factory=datetime.utcnow)

    @property
    def id(self) -> str:
        return f"{self.run_id}:{self.cell_key}:{self.method}:{self.replicate}"

    @property
    def task_key(self) -> tuple:
        return (self.cell_key, self.replicate)
