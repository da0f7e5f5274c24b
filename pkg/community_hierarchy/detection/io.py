"""
Text formats for trees, model parameters, partitions, edge lists and dendrograms.

Tree / params file: one node per line, `path<TAB>p_value[<TAB>pi]`, the root written as `-`;
leaves are inferred from the paths and the optional pi column is only read on leaf lines
(uniform pi when absent). Partition file: line i holds the cluster of node i. Edge list:
`i<TAB>j` per edge after a `# nodes<TAB>n` header.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np

from .errors import ValidationError
from .models import CommunityTree, Dendrogram, Graph, HsbmParams, Merge, Partition, TreeNode

NODES_HEADER = "# nodes"


def _content_lines(text: str) -> Iterable[Tuple[int, List[str]]]:
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        yield lineno, line.split()


def parse_tree_table(text: str) -> Tuple[CommunityTree, Dict[TreeNode, float], Dict[TreeNode, float]]:
    """Nodes with their optional p values and leaf pi weights."""
    values: Dict[TreeNode, float] = {}
    weights: Dict[TreeNode, float] = {}
    nodes: List[TreeNode] = []
    for lineno, fields in _content_lines(text):
        if len(fields) > 3:
            raise ValidationError(f"line {lineno}: expected 'path<TAB>p[<TAB>pi]', got {len(fields)} fields")
        node = TreeNode.parse(fields[0])
        if node in values or node in nodes:
            raise ValidationError(f"line {lineno}: node {node} listed twice")
        nodes.append(node)
        try:
            if len(fields) >= 2:
                values[node] = float(fields[1])
            if len(fields) == 3:
                weights[node] = float(fields[2])
        except ValueError:
            raise ValidationError(f"line {lineno}: non-numeric value in {fields!r}") from None
    if not nodes:
        raise ValidationError("tree file lists no nodes")
    return CommunityTree.from_paths(nodes), values, weights


def parse_params(text: str) -> HsbmParams:
    tree, values, weights = parse_tree_table(text)
    if weights:
        pi = tuple(weights.get(leaf, 0.0) for leaf in tree.leaves)
    else:
        pi = tuple([1.0 / tree.K] * tree.K)
    return HsbmParams(tree=tree, pi=pi, p=values)


def format_params(params: HsbmParams) -> str:
    lines = []
    tree = params.tree
    for node in tree.nodes:
        line = f"{node}\t{params.p[node]!r}"
        if tree.is_leaf(node):
            line += f"\t{params.pi[tree.leaf_index(node)]!r}"
        lines.append(line)
    return "\n".join(lines) + "\n"


def format_tree(tree: CommunityTree, values: Optional[Dict[TreeNode, float]] = None) -> str:
    lines = []
    for node in tree.nodes:
        value = (values or {}).get(node)
        lines.append(str(node) if value is None else f"{node}\t{value!r}")
    return "\n".join(lines) + "\n"


def read_params(path: Path) -> HsbmParams:
    return parse_params(Path(path).read_text(encoding="utf-8"))


def write_params(params: HsbmParams, path: Path) -> Path:
    path = Path(path)
    path.write_text(format_params(params), encoding="utf-8")
    return path


def read_tree(path: Path) -> CommunityTree:
    tree, _, _ = parse_tree_table(Path(path).read_text(encoding="utf-8"))
    return tree


def write_tree(tree: CommunityTree, path: Path, values: Optional[Dict[TreeNode, float]] = None) -> Path:
    path = Path(path)
    path.write_text(format_tree(tree, values), encoding="utf-8")
    return path


def read_partition(path: Path) -> Partition:
    labels = []
    for lineno, fields in _content_lines(Path(path).read_text(encoding="utf-8")):
        try:
            labels.append(int(fields[0]))
        except ValueError:
            raise ValidationError(f"{path}:{lineno}: label {fields[0]!r} is not an integer") from None
    return Partition(np.array(labels, dtype=np.int64))


def write_partition(partition: Partition, path: Path) -> Path:
    path = Path(path)
    path.write_text("".join(f"{label}\n" for label in partition.labels.tolist()), encoding="utf-8")
    return path


def read_edges(path: Path, n: Optional[int] = None) -> Graph:
    """Edge list; the node count comes from `n`, else the header, else the largest id + 1."""
    text = Path(path).read_text(encoding="utf-8")
    declared = None
    edges = []
    for raw in text.splitlines():
        line = raw.strip()
        if line.startswith(NODES_HEADER):
            declared = int(line[len(NODES_HEADER) :].strip())
    for lineno, fields in _content_lines(text):
        if len(fields) != 2:
            raise ValidationError(f"{path}:{lineno}: expected 'i<TAB>j'")
        edges.append((int(fields[0]), int(fields[1])))
    if n is None:
        n = declared if declared is not None else (max((max(e) for e in edges), default=-1) + 1)
    return Graph.from_edges(n, edges)


def write_edges(graph: Graph, path: Path) -> Path:
    path = Path(path)
    with path.open("w", encoding="utf-8") as f:
        f.write(f"{NODES_HEADER}\t{graph.n}\n")
        for i, j in graph.edges():
            f.write(f"{i}\t{j}\n")
    return path


def to_newick(dend: Dendrogram) -> str:
    """Newick string: leaves are initial cluster ids, internal nodes carry the merge similarity."""

    def render(ref: int) -> str:
        if not dend.is_merge(ref):
            return f"{ref}:0"
        merge = dend.merge_by_id[ref]
        return f"({render(merge.left)},{render(merge.right)}){merge.similarity!r}:0"

    if dend.K == 0:
        return ";"
    body = render(dend.root_id)
    if body.endswith(":0"):
        body = body[: -len(":0")]
    return body + ";"


def dendrogram_to_dict(dend: Dendrogram) -> dict:
    return {
        "initial_labels": dend.initial_clusters.labels.tolist(),
        "merges": [
            {
                "left": merge.left,
                "right": merge.right,
                "similarity": merge.similarity,
                "new_id": merge.new_id,
                "weight": merge.weight,
                "pairs": merge.pairs,
            }
            for merge in dend.merges
        ],
    }


def dendrogram_to_json(dend: Dendrogram) -> str:
    return json.dumps(dendrogram_to_dict(dend), indent=2)


def dendrogram_from_json(text: str) -> Dendrogram:
    try:
        payload = json.loads(text)
        labels = np.array(payload["initial_labels"], dtype=np.int64)
        merges = tuple(
            Merge(
                left=int(item["left"]),
                right=int(item["right"]),
                similarity=float(item["similarity"]),
                new_id=int(item["new_id"]),
                weight=item.get("weight"),
                pairs=item.get("pairs"),
            )
            for item in payload["merges"]
        )
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise ValidationError(f"malformed dendrogram JSON: {exc}") from exc
    return Dendrogram(initial_clusters=Partition(labels), merges=merges)
