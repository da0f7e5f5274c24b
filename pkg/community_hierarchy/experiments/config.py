"""
Experiment configuration.

Values are layered, lowest precedence first: dataclass defaults, environment variables
(HCD_DATABASE_URL, HCD_JOBS, HCD_OUTPUT_DIR), a key=value config file, explicit CLI flags.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Optional, Tuple

from ..detection.errors import ValidationError
from ..detection.models import Method, NoiseKind
from .records import ExperimentKind

ENV_KEYS = {
    "database_url": "HCD_DATABASE_URL",
    "jobs": "HCD_JOBS",
    "output_dir": "HCD_OUTPUT_DIR",
}
DEFAULT_N = {ExperimentKind.ROBUSTNESS: 4000}
FALLBACK_N = 3200

# fields that never change results; left out of the run id
_RUNTIME_FIELDS = {"jobs", "output_dir", "database_url"}


def _floats(text: str) -> Tuple[float, ...]:
    return tuple(float(item) for item in text.split(",") if item.strip())


def _pairs(text: str) -> Tuple[Tuple[float, float], ...]:
    cells = []
    for item in text.split(";"):
        if not item.strip():
            continue
        values = _floats(item)
        if len(values) != 2:
            raise ValidationError(f"grid cell {item!r} must be 'a1,a2'")
        cells.append((values[0], values[1]))
    return tuple(cells)


def _bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValidationError(f"not a boolean: {text!r}")


def _optional_int(text: str) -> Optional[int]:
    return None if text.strip().lower() in ("", "none") else int(text)


def _optional_str(text: str) -> Optional[str]:
    return None if text.strip().lower() in ("", "none") else text.strip()


def _scenarios(text: str) -> Tuple[NoiseKind, ...]:
    return tuple(NoiseKind(item.strip()) for item in text.split(",") if item.strip())


@dataclass(frozen=True)
class ExperimentConfig:
    kind: ExperimentKind = ExperimentKind.SINGLE_RUN
    d: int = 3
    arity: int = 2
    a: Tuple[float, ...] = (40.0, 60.0, 80.0, 100.0)
    a0: float = 40.0
    a3: float = 100.0
    grid_step: float = 5.0
    cells: Tuple[Tuple[float, float], ...] = ()
    betas: Tuple[float, ...] = (0.25, 0.4, 0.5, 0.6, 0.75)
    etas: Tuple[float, ...] = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5)
    scenarios: Tuple[NoiseKind, ...] = (NoiseKind.UNIFORM, NoiseKind.ADVERSARIAL)
    base_probability: float = 0.08
    n: Optional[int] = None
    fixed_sizes: bool = False
    method: Method = Method.BOTH
    replicates: int = 10
    seed: int = 0
    min_size: int = 20
    dense_limit: int = 2048
    output_dir: str = "results"
    jobs: int = field(default_factory=lambda: os.cpu_count() or 1)
    database_url: Optional[str] = None

    @property
    def resolved_n(self) -> int:
        return self.n if self.n is not None else DEFAULT_N.get(self.kind, FALLBACK_N)

    @property
    def methods(self) -> List[Method]:
        return self.method.expand()

    def grid(self) -> List[Tuple[float, float]]:
        """(a1, a2) cells, explicit ones if configured, else a0 < a1 < a2 < a3 in grid_step steps."""
        if self.cells:
            return sorted(set(self.cells))
        values = []
        current = self.a0 + self.grid_step
        while current < self.a3 - 1e-9:
            values.append(round(current, 10))
            current += self.grid_step
        return [(a1, a2) for a1 in values for a2 in values if a1 < a2]

    def validate(self) -> "ExperimentConfig":
        problems = []
        if self.replicates < 1:
            problems.append("replicates must be >= 1")
        if self.d < 1:
            problems.append("tree depth d must be >= 1")
        if self.arity < 2:
            problems.append("arity must be >= 2")
        if self.jobs < 1:
            problems.append("jobs must be >= 1")
        if self.n is not None and self.n < 1:
            problems.append("n must be >= 1")
        if self.min_size < 1:
            problems.append("min_size must be >= 1")
        if self.kind in (ExperimentKind.SINGLE_RUN, ExperimentKind.THRESHOLDS) and len(self.a) != self.d + 1:
            problems.append(f"a must have d+1={self.d + 1} entries, got {len(self.a)}")
        if self.kind is ExperimentKind.THRESHOLDS and self.arity != 2:
            problems.append("thresholds are computed for binary trees only")
        if self.kind is ExperimentKind.PHASE_DIAGRAM:
            if self.d != 3:
                problems.append("the phase diagram varies (a1, a2) and needs d = 3")
            if self.grid_step <= 0:
                problems.append("grid_step must be positive")
            grid = self.grid()
            if not grid:
                problems.append("phase-diagram grid is empty")
            for a1, a2 in grid:
                if not self.a0 < a1 < a2 < self.a3:
                    problems.append(f"cell ({a1}, {a2}) is not strictly inside ({self.a0}, {self.a3})")
        if self.kind is ExperimentKind.ROBUSTNESS:
            if self.arity != 2:
                problems.append("robustness sweeps use binary trees")
            if not self.betas or not self.etas or not self.scenarios:
                problems.append("robustness grids (betas, etas, scenarios) must be non-empty")
            problems.extend(f"beta={b} must be positive and != 1" for b in self.betas if b <= 0 or b == 1.0)
            problems.extend(f"eta={e} outside [0, 1)" for e in self.etas if not 0.0 <= e < 1.0)
        if problems:
            raise ValidationError("invalid experiment config: " + "; ".join(problems))
        return self

    def result_fields(self) -> Dict[str, Any]:
        payload = asdict(self)
        for name in _RUNTIME_FIELDS:
            payload.pop(name, None)
        payload["n"] = self.resolved_n
        return json.loads(json.dumps(payload, default=lambda value: getattr(value, "value", str(value))))

    def run_id(self) -> str:
        """Stable id of the results this config produces; same config, same id (resume key)."""
        digest = hashlib.blake2b(
            json.dumps(self.result_fields(), sort_keys=True).encode("utf-8"), digest_size=6
        ).hexdigest()
        return f"{self.kind.value}-{digest}"

    def with_overrides(self, values: Mapping[str, Any]) -> "ExperimentConfig":
        unknown = set(values) - {f.name for f in fields(self)}
        if unknown:
            raise ValidationError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return replace(self, **dict(values))


_CONVERTERS: Dict[str, Callable[[str], Any]] = {
    "kind": lambda text: ExperimentKind(text.strip()),
    "d": int,
    "arity": int,
    "a": _floats,
    "a0": float,
    "a3": float,
    "grid_step": float,
    "cells": _pairs,
    "betas": _floats,
    "etas": _floats,
    "scenarios": _scenarios,
    "base_probability": float,
    "n": _optional_int,
    "fixed_sizes": _bool,
    "method": lambda text: Method(text.strip()),
    "replicates": int,
    "seed": int,
    "min_size": int,
    "dense_limit": int,
    "output_dir": str,
    "jobs": int,
    "database_url": _optional_str,
}


def convert_value(key: str, text: str) -> Any:
    key = key.strip().replace("-", "_")
    if key not in _CONVERTERS:
        raise ValidationError(f"unknown config key {key!r}")
    try:
        return _CONVERTERS[key](text)
    except ValueError as exc:
        raise ValidationError(f"bad value for {key}: {text!r} ({exc})") from exc


def parse_config_text(text: str) -> Dict[str, Any]:
    """key = value lines; '#' starts a comment, list values are comma separated."""
    values: Dict[str, Any] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"config line {lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        values[key.strip().replace("-", "_")] = convert_value(key, value.strip())
    return values


def load_config_file(path: Path) -> Dict[str, Any]:
    return parse_config_text(Path(path).read_text(encoding="utf-8"))


def environment_values(environ: Optional[Mapping[str, str]] = None) -> Dict[str, Any]:
    environ = os.environ if environ is None else environ
    values: Dict[str, Any] = {}
    for key, variable in ENV_KEYS.items():
        if environ.get(variable):
            values[key] = convert_value(key, environ[variable])
    return values


def build_config(
    file_path: Optional[Path] = None,
    overrides: Optional[Mapping[str, Any]] = None,
    environ: Optional[Mapping[str, str]] = None,
    base: Optional[ExperimentConfig] = None,
) -> ExperimentConfig:
    config = base or ExperimentConfig()
    config = config.with_overrides(environment_values(environ))
    if file_path is not None:
        config = config.with_overrides(load_config_file(file_path))
    config = config.with_overrides({k: v for k, v in (overrides or {}).items() if v is not None})
    return config.validate()
