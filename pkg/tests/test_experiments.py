import csv
import hashlib
from pathlib import Path

import pytest

from community_hierarchy.detection import EigensolverError, Method, NoiseKind, ValidationError
from community_hierarchy.experiments import (
    ExperimentConfig,
    ExperimentKind,
    ExperimentWorker,
    InMemoryResultsRepository,
    LocalRunStorage,
    LocalTaskPool,
    ReplicateResult,
    RunState,
    SqlAlchemyResultsRepository,
    StoragePaths,
    WorkerConfig,
    build_config,
    cell_seed,
    parse_config_text,
    plan_tasks,
    run_experiment,
)
from community_hierarchy.experiments import cli
from community_hierarchy.experiments.cli import main
from community_hierarchy.experiments.records import ExperimentRunRecord, RunPhase
from community_hierarchy.experiments.tasks import replicate_seed


class CountingPool(LocalTaskPool):
    def __init__(self):
        super().__init__(1)
        self.dispatched = 0

    def imap(self, fn, items):
        self.dispatched += len(items)
        return super().imap(fn, items)


def _worker(tmp_path, repo=None, pool=None):
    repo = repo or InMemoryResultsRepository()
    storage = LocalRunStorage(StoragePaths(tmp_path))
    return ExperimentWorker(repository=repo, storage=storage, pool=pool), repo


def _read_csv(path):
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.DictReader(f))


def test_config_precedence(tmp_path):
    config_file = tmp_path / "run.cfg"
    config_file.write_text("# sweep\njobs = 5\nreplicates = 4\netas = 0.1, 0.2\n", encoding="utf-8")
    environ = {"HCD_JOBS": "3", "HCD_OUTPUT_DIR": "env_out"}

    config = build_config(file_path=config_file, overrides={"jobs": 7, "seed": None}, environ=environ)
    assert config.jobs == 7
    assert config.replicates == 4
    assert config.etas == (0.1, 0.2)
    assert config.output_dir == "env_out"
    assert config.seed == 0

    assert build_config(environ=environ).jobs == 3


def test_config_rejects_bad_input(tmp_path):
    with pytest.raises(ValidationError):
        parse_config_text("colour = blue")
    with pytest.raises(ValidationError):
        parse_config_text("replicates: 3")
    with pytest.raises(ValidationError):
        parse_config_text("replicates = many")
    with pytest.raises(ValidationError):
        build_config(overrides={"replicates": 0}, environ={})
    with pytest.raises(ValidationError):
        build_config(overrides={"kind": ExperimentKind.PHASE_DIAGRAM, "d": 2}, environ={})


def test_phase_grid_and_run_id():
    config = ExperimentConfig(kind=ExperimentKind.PHASE_DIAGRAM, a0=40, a3=60, grid_step=5)
    assert config.grid() == [(45.0, 50.0), (45.0, 55.0), (50.0, 55.0)]
    explicit = ExperimentConfig(kind=ExperimentKind.PHASE_DIAGRAM, cells=((60, 65), (45, 50)))
    assert explicit.grid() == [(45, 50), (60, 65)]

    assert config.run_id() == ExperimentConfig(kind=ExperimentKind.PHASE_DIAGRAM, a0=40, a3=60, grid_step=5).run_id()
    assert config.run_id() == config.with_overrides({"jobs": 13, "output_dir": "elsewhere"}).run_id()
    assert config.run_id() != config.with_overrides({"seed": 1}).run_id()
    assert config.run_id().startswith("phase-diagram-")


def test_seeds_are_stable_per_cell():
    expected = int.from_bytes(hashlib.blake2b(b"7:a1=45.0,a2=50.0").digest()[:8], "big")
    assert cell_seed(7, "a1=45.0,a2=50.0") == expected
    assert replicate_seed(2**64 - 1, 2) == 1

    one = ExperimentConfig(kind=ExperimentKind.PHASE_DIAGRAM, cells=((45, 50),), replicates=3)
    two = one.with_overrides({"cells": ((45, 50), (60, 65))})
    seeds_one = {task.key: task.seed for task in plan_tasks(one, "r")}
    seeds_two = {task.key: task.seed for task in plan_tasks(two, "r")}
    assert len(seeds_two) == 6
    assert all(seeds_two[key] == seed for key, seed in seeds_one.items())


def test_sqlite_repository_roundtrip(tmp_path):
    repo = SqlAlchemyResultsRepository(f"sqlite:///{tmp_path / 'results.db'}")
    run = ExperimentRunRecord(
        id="robustness-abc",
        kind=ExperimentKind.ROBUSTNESS,
        state=RunState.QUEUED,
        phase=RunPhase.PLANNING,
        config_json={"d": 3},
    )
    repo.save_run(run)
    repo.update_run(run.id, state=RunState.RUNNING, total_tasks=4)
    stored = repo.get_run(run.id)
    assert stored.state is RunState.RUNNING
    assert stored.total_tasks == 4
    assert stored.config_json == {"d": 3}

    result = ReplicateResult(run.id, "cell", "bottom-up", 0, 2**64 - 1, {"r_s": 0.0}, {"eta": 0.1})
    repo.upsert_results([result])
    repo.upsert_results([ReplicateResult(run.id, "cell", "bottom-up", 0, 2**64 - 1, {"r_s": 0.5}, {"eta": 0.1})])
    results = repo.list_results(run.id)
    assert len(results) == 1
    assert results[0].seed == 2**64 - 1
    assert results[0].metrics == {"r_s": 0.5}
    assert results[0].cell == {"eta": 0.1}
    assert [stored.id for stored in repo.list_runs()] == [run.id]

    repo.delete_run(run.id)
    assert repo.get_run(run.id) is None
    assert repo.list_results(run.id) == []
    with pytest.raises(ValueError):
        repo.update_run("missing", state=RunState.FAILED)


def test_thresholds_run_writes_csv(tmp_path):
    worker, _ = _worker(tmp_path)
    config = ExperimentConfig(kind=ExperimentKind.THRESHOLDS, a=(40, 45, 50, 100))
    run = worker.run(config)
    assert run.state is RunState.COMPLETED
    rows = _read_csv(run.output_path)
    assert [row["q"] for row in rows] == ["1", "2", "3"]
    assert rows[1]["feasible_bu"] == "true"
    assert rows[1]["feasible_td"] == "false"
    assert float(rows[1]["J_bu"]) == pytest.approx(1.371, abs=1e-3)


def test_robustness_run_resumes_missing_replicates(tmp_path):
    config = ExperimentConfig(
        kind=ExperimentKind.ROBUSTNESS,
        d=2,
        n=400,
        fixed_sizes=True,
        betas=(0.25,),
        etas=(0.0, 0.1),
        scenarios=(NoiseKind.UNIFORM, NoiseKind.ADVERSARIAL),
        replicates=2,
    )
    pool = CountingPool()
    worker, repo = _worker(tmp_path, pool=pool)
    run = worker.run(config)
    assert run.state is RunState.COMPLETED
    assert pool.dispatched == 8
    assert run.completed_tasks == run.total_tasks == 8

    rows = _read_csv(run.output_path)
    assert len(rows) == 4
    assert {row["scenario"] for row in rows} == {"uniform", "adversarial"}
    assert all(row["replicates"] == "2" for row in rows)
    clean = [row for row in rows if row["eta"] == "0.0"]
    assert all(row["mean_changed_fraction"] == "0.0" for row in clean)
    assert all(row["eta_minus"] == "" for row in rows if row["scenario"] == "uniform")

    dropped = sorted(repo.results)[:3]
    for key in dropped:
        del repo.results[key]
    pool.dispatched = 0
    again = worker.run(config)
    assert again.state is RunState.COMPLETED
    assert pool.dispatched == 3
    assert _read_csv(again.output_path) == rows


def test_failed_run_is_recorded(tmp_path):
    worker, repo = _worker(tmp_path)
    config = ExperimentConfig(kind=ExperimentKind.SINGLE_RUN, d=1, a=(2, 20), n=3, replicates=1)
    with pytest.raises(ValidationError):
        worker.run(config)
    run = repo.get_run(config.run_id())
    assert run.state is RunState.FAILED
    assert run.error_message


def test_single_run_keeps_artifacts(tmp_path):
    worker, repo = _worker(tmp_path)
    config = ExperimentConfig(
        kind=ExperimentKind.SINGLE_RUN,
        d=1,
        a=(2, 20),
        n=200,
        fixed_sizes=True,
        method=Method.BOTH,
        replicates=2,
    )
    run = worker.run(config)
    run_dir = tmp_path / "runs" / run.id
    for name in ("config.json", "params.tsv", "edges.tsv", "truth_labels.txt"):
        assert (run_dir / name).is_file()
    for method in ("bottom-up", "top-down"):
        for name in ("labels.txt", "tree.tsv", "dendrogram.nwk", "dendrogram.json"):
            assert (run_dir / method / name).is_file()
    rows = _read_csv(run.output_path)
    assert [(row["replicate"], row["method"]) for row in rows] == [
        ("0", "bottom-up"),
        ("0", "top-down"),
        ("1", "bottom-up"),
        ("1", "top-down"),
    ]
    assert len(repo.results) == 4


def test_run_experiment_with_sqlite(tmp_path):
    url = f"sqlite:///{tmp_path / 'runs.db'}"
    config = ExperimentConfig(kind=ExperimentKind.THRESHOLDS, a=(3, 9, 15, 21), output_dir=str(tmp_path))
    run = run_experiment(config, worker_config=WorkerConfig(output_dir=str(tmp_path), database_url=url))
    assert run.state is RunState.COMPLETED
    assert SqlAlchemyResultsRepository(url).get_run(run.id).state is RunState.COMPLETED


def test_cli_exit_codes(tmp_path, capsys):
    assert main(["thresholds", "--a", "40,45,50,100", "--out", str(tmp_path)]) == 0
    assert "J_bu" in capsys.readouterr().out
    assert main(["thresholds", "--a", "40,30,50,100", "--out", str(tmp_path)]) == 1
    assert main(["bogus"]) == 1
    assert main(["fit", "--edges", str(tmp_path / "missing.tsv"), "--out", str(tmp_path)]) == 2


def test_cli_generate_fit_score(tmp_path, capsys):
    data = tmp_path / "data"
    assert main(["generate", "--d", "1", "--a", "2,20", "--n", "200", "--seed", "1", "--fixed-sizes", "--out", str(data)]) == 0
    assert (data / "edges.tsv").is_file()
    assert main(["fit", "--edges", str(data / "edges.tsv"), "--method", "bottom-up", "--out", str(data / "fit")]) == 0
    fitted = data / "fit" / "bottom-up"
    capsys.readouterr()
    code = main(
        [
            "score",
            "--truth-labels",
            str(data / "truth_labels.txt"),
            "--truth-tree",
            str(data / "params.tsv"),
            "--pred-labels",
            str(fitted / "labels.txt"),
            "--pred-tree",
            str(fitted / "tree.tsv"),
            "--dendrogram",
            str(fitted / "dendrogram.json"),
        ]
    )
    assert code == 0
    header, values = capsys.readouterr().out.strip().splitlines()
    assert header.split(",") == ["loss", "clusters", "r_s", "inversions", "accuracy_1"]
    assert values.split(",")[3] == "0"


def test_cli_reports_eigensolver_failure(tmp_path, monkeypatch):
    edges = tmp_path / "edges.tsv"
    edges.write_text("0\t1\n1\t2\n", encoding="utf-8")

    def failing_fit(*args, **kwargs):
        raise EigensolverError("Lanczos did not converge", residual=1.0)

    monkeypatch.setattr(cli, "fit_graph", failing_fit)
    assert main(["fit", "--edges", str(edges), "--method", "bottom-up", "--out", str(tmp_path / "fit")]) == 1


def test_local_task_pool_with_several_processes():
    assert sorted(LocalTaskPool(3).imap(abs, [-3, -1, -2, 4])) == [1, 2, 3, 4]
    with pytest.raises(ValueError):
        LocalTaskPool(0)


def test_results_do_not_depend_on_job_count(tmp_path):
    config = ExperimentConfig(
        kind=ExperimentKind.ROBUSTNESS,
        d=2,
        n=400,
        fixed_sizes=True,
        betas=(0.25,),
        etas=(0.0, 0.1),
        scenarios=(NoiseKind.UNIFORM, NoiseKind.ADVERSARIAL),
        replicates=2,
    )
    outputs = []
    for jobs in (1, 4):
        out = tmp_path / f"jobs-{jobs}"
        run = run_experiment(config, worker_config=WorkerConfig(output_dir=str(out), jobs=jobs))
        assert run.state is RunState.COMPLETED
        outputs.append(Path(run.output_path).read_bytes())
    assert outputs[0] == outputs[1]


@pytest.mark.slow
def test_single_run_on_ternary_tree(tmp_path):
    worker, _ = _worker(tmp_path)
    config = ExperimentConfig(
        kind=ExperimentKind.SINGLE_RUN,
        d=3,
        arity=3,
        a=(10, 30, 40, 130),
        n=2700,
        fixed_sizes=True,
        method=Method.BOTH,
        replicates=1,
    )
    run = worker.run(config)
    run_dir = tmp_path / "runs" / run.id
    for method in ("bottom-up", "top-down"):
        assert (run_dir / method / "dendrogram.nwk").is_file()
    rows = {row["method"]: row for row in _read_csv(run.output_path)}
    assert float(rows["bottom-up"]["inversions"]) == 0.0
    assert float(rows["top-down"]["inversions"]) >= 0.0


@pytest.mark.slow
def test_phase_diagram_spot_check(tmp_path):
    config = ExperimentConfig(
        kind=ExperimentKind.PHASE_DIAGRAM,
        cells=((45, 50), (60, 65)),
        method=Method.BOTTOM_UP,
        fixed_sizes=True,
        dense_limit=4096,
        replicates=10,
        seed=1,
    )
    worker, _ = _worker(tmp_path)
    rows = _read_csv(worker.run(config).output_path)
    depth_two = {(float(row["a1"]), float(row["a2"])): row for row in rows if row["depth"] == "2"}
    feasible, infeasible = depth_two[(45.0, 50.0)], depth_two[(60.0, 65.0)]
    assert feasible["predicted_recovery"] == "true"
    assert infeasible["predicted_recovery"] == "false"
    assert int(feasible["exact_count"]) >= 8
    assert int(infeasible["exact_count"]) <= 2
