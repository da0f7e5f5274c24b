from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Mapping, Sequence

from ..detection.io import (
    dendrogram_to_json,
    to_newick,
    write_edges,
    write_params,
    write_partition,
    write_tree,
)
from ..detection.models import CommunityTree, Dendrogram, Graph, HsbmParams, Partition

logger = logging.getLogger(__name__)

LABELS_NAME = "labels.txt"
TREE_NAME = "tree.tsv"
NEWICK_NAME = "dendrogram.nwk"
DENDROGRAM_JSON_NAME = "dendrogram.json"


@dataclass
class StoragePaths:
    root: Path

    def run_dir(self, run_id: str) -> Path:
        return self.root / "runs" / str(run_id)

    def results_csv_path(self, run_id: str, name: str) -> Path:
        return self.run_dir(run_id) / f"{name}.csv"

    def config_path(self, run_id: str) -> Path:
        return self.run_dir(run_id) / "config.json"

    def edges_path(self, run_id: str) -> Path:
        return self.run_dir(run_id) / "edges.tsv"

    def params_path(self, run_id: str) -> Path:
        return self.run_dir(run_id) / "params.tsv"

    def truth_labels_path(self, run_id: str) -> Path:
        return self.run_dir(run_id) / "truth_labels.txt"

    def method_dir(self, run_id: str, method: str) -> Path:
        return self.run_dir(run_id) / method

    def pred_labels_path(self, run_id: str, method: str) -> Path:
        return self.method_dir(run_id, method) / LABELS_NAME

    def pred_tree_path(self, run_id: str, method: str) -> Path:
        return self.method_dir(run_id, method) / TREE_NAME

    def newick_path(self, run_id: str, method: str) -> Path:
        return self.method_dir(run_id, method) / NEWICK_NAME

    def dendrogram_json_path(self, run_id: str, method: str) -> Path:
        return self.method_dir(run_id, method) / DENDROGRAM_JSON_NAME


def format_cell(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if value is None:
        return ""
    return str(value)


class LocalRunStorage:
    """
    Manages the filesystem layout of experiment outputs: result CSVs and single-run artifacts.
    """

    def __init__(self, storage_paths: StoragePaths):
        self.paths = storage_paths

    def ensure_run_dir(self, run_id: str) -> Path:
        base = self.paths.run_dir(run_id)
        base.mkdir(parents=True, exist_ok=True)
        return base

    def write_config(self, run_id: str, config_fields: Mapping) -> Path:
        self.ensure_run_dir(run_id)
        target = self.paths.config_path(run_id)
        with target.open("w", encoding="utf-8") as f:
            json.dump(dict(config_fields), f, indent=2, sort_keys=True)
        return target

    def write_csv(self, run_id: str, name: str, columns: Sequence[str], rows: List[Mapping]) -> Path:
        """Rows are written in the order given; callers sort them."""
        self.ensure_run_dir(run_id)
        target = self.paths.results_csv_path(run_id, name)
        with target.open("w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(columns)
            for row in rows:
                writer.writerow([format_cell(row.get(column)) for column in columns])
        logger.info("wrote %d rows to %s", len(rows), target)
        return target

    def write_instance(self, run_id: str, params: HsbmParams, graph: Graph, truth: Partition) -> Dict[str, Path]:
        self.ensure_run_dir(run_id)
        return {
            "params": write_params(params, self.paths.params_path(run_id)),
            "edges": write_edges(graph, self.paths.edges_path(run_id)),
            "truth_labels": write_partition(truth, self.paths.truth_labels_path(run_id)),
        }

    def write_fit(
        self,
        run_id: str,
        method: str,
        labels: Partition,
        tree: CommunityTree,
        dendrogram: Dendrogram,
    ) -> Dict[str, Path]:
        return write_fit_artifacts(self.paths.method_dir(run_id, method), labels, tree, dendrogram)


def write_fit_artifacts(
    directory: Path,
    labels: Partition,
    tree: CommunityTree,
    dendrogram: Dendrogram,
) -> Dict[str, Path]:
    """labels.txt, tree.tsv, dendrogram.nwk and dendrogram.json for one fitted method."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    newick = directory / NEWICK_NAME
    newick.write_text(to_newick(dendrogram) + "\n", encoding="utf-8")
    dendrogram_json = directory / DENDROGRAM_JSON_NAME
    dendrogram_json.write_text(dendrogram_to_json(dendrogram) + "\n", encoding="utf-8")
    return {
        "labels": write_partition(labels, directory / LABELS_NAME),
        "tree": write_tree(tree, directory / TREE_NAME),
        "newick": newick,
        "dendrogram": dendrogram_json,
    }
