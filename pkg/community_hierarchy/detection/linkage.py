"""
Bottom-up hierarchical community detection: flat clustering followed by average linkage on
edge densities.

Cluster-to-cluster similarities are kept as exact integers (edge count between the clusters)
next to the pair count |a|*|b|. Merging a and b into m gives w(m, c) = w(a, c) + w(b, c) and
pairs(m, c) = (|a| + |b|) * |c|, which is the size-weighted mean update of average linkage
without any floating-point drift.
"""

from __future__ import annotations

import heapq
import logging
from fractions import Fraction
from typing import Callable, Dict, Iterable, List, Sequence, Tuple

import numpy as np
from scipy import sparse

from .errors import ValidationError
from .models import (
    ROOT,
    CommunityTree,
    Dendrogram,
    Graph,
    LinkageMode,
    Merge,
    Partition,
    TreeNode,
)

logger = logging.getLogger(__name__)

FlatClusterFn = Callable[[Graph], Partition]


def _as_node_array(nodes: Iterable[int], n: int, name: str) -> np.ndarray:
    arr = np.unique(np.fromiter((int(v) for v in nodes), dtype=np.int64))
    if arr.size == 0:
        raise ValidationError(f"node set {name} is empty")
    if arr[0] < 0 or arr[-1] >= n:
        raise ValidationError(f"node set {name} has nodes outside 0..{n - 1}")
    return arr


def edge_count(graph: Graph, a: Iterable[int], b: Iterable[int]) -> Tuple[int, int]:
    """(edges between a and b, |a| * |b|) for disjoint non-empty node sets."""
    left = _as_node_array(a, graph.n, "a")
    right = _as_node_array(b, graph.n, "b")
    if np.intersect1d(left, right, assume_unique=True).size:
        raise ValidationError("node sets must be disjoint")
    weight = int(graph.adjacency[left][:, right].sum())
    return weight, int(left.size) * int(right.size)


def edge_density(graph: Graph, a: Iterable[int], b: Iterable[int]) -> float:
    weight, pairs = edge_count(graph, a, b)
    return weight / pairs


def cluster_weights(graph: Graph, partition: Partition) -> np.ndarray:
    """K x K integer matrix of edge counts between clusters (diagonal: twice the internal edges)."""
    if partition.n != graph.n:
        raise ValidationError(f"partition covers {partition.n} nodes, graph has {graph.n}")
    K = partition.K
    indicator = sparse.csr_matrix(
        (np.ones(graph.n, dtype=np.int64), (np.arange(graph.n), partition.labels)),
        shape=(graph.n, K),
    )
    weights = indicator.T @ graph.adjacency @ indicator
    return np.asarray(weights.todense(), dtype=np.int64)


class _LinkageState:
    def __init__(self, weights: np.ndarray, sizes: Sequence[int], mode: LinkageMode):
        K = len(sizes)
        self.mode = mode
        self.sizes: Dict[int, int] = {k: int(sizes[k]) for k in range(K)}
        self.weights: Dict[int, Dict[int, int]] = {
            k: {j: int(weights[k, j]) for j in range(K) if j != k} for k in range(K)
        }
        self.heap: List[Tuple[Fraction, int, int]] = []
        for i in range(K):
            for j in range(i + 1, K):
                self._push(i, j)
        heapq.heapify(self.heap)

    def _key(self, i: int, j: int) -> Fraction:
        density = Fraction(self.weights[i][j], self.sizes[i] * self.sizes[j])
        return -density if self.mode is LinkageMode.ASSORTATIVE else density

    def _push(self, i: int, j: int) -> None:
        self.heap.append((self._key(i, j), i, j))

    def pop_best(self) -> Tuple[int, int]:
        while True:
            _, i, j = heapq.heappop(self.heap)
            if i in self.sizes and j in self.sizes:
                return i, j

    def merge(self, i: int, j: int, new_id: int) -> Merge:
        weight = self.weights[i][j]
        pairs = self.sizes[i] * self.sizes[j]
        size = self.sizes.pop(i) + self.sizes.pop(j)
        row_i = self.weights.pop(i)
        row_j = self.weights.pop(j)
        merged: Dict[int, int] = {}
        for c in self.sizes:
            merged[c] = row_i[c] + row_j[c]
            self.weights[c][new_id] = merged[c]
            del self.weights[c][i], self.weights[c][j]
        self.sizes[new_id] = size
        self.weights[new_id] = merged
        for c in sorted(merged):
            heapq.heappush(self.heap, (self._key(c, new_id), c, new_id))
        return Merge(left=i, right=j, similarity=weight / pairs, new_id=new_id, weight=weight, pairs=pairs)


def average_linkage(
    graph: Graph,
    initial: Partition,
    mode: LinkageMode | str = LinkageMode.ASSORTATIVE,
) -> Dendrogram:
    """
    Merge the clusters of `initial` pairwise until one remains. Each step merges the pair of
    largest density (smallest in disassortative mode); ties go to the lexicographically
    smallest (min id, max id) pair. Merged clusters get ids K, K+1, ...
    """
    mode = LinkageMode(mode)
    K = initial.K
    if K < 1:
        raise ValidationError("average linkage needs at least one cluster")
    weights = cluster_weights(graph, initial)
    state = _LinkageState(weights, initial.sizes, mode)
    merges: List[Merge] = []
    for step in range(K - 1):
        i, j = state.pop_best()
        merges.append(state.merge(i, j, K + step))
    return Dendrogram(initial_clusters=initial, merges=tuple(merges))


def bottom_up_hcd(
    graph: Graph,
    flat: FlatClusterFn,
    mode: LinkageMode | str = LinkageMode.ASSORTATIVE,
) -> Tuple[Partition, Dendrogram]:
    if graph.n < 1:
        raise ValidationError("bottom-up detection needs a non-empty graph")
    partition = flat(graph)
    if partition.n != graph.n:
        raise ValidationError(f"flat clusterer labelled {partition.n} nodes, graph has {graph.n}")
    logger.debug("flat clustering found %d clusters; running average linkage", partition.K)
    return partition, average_linkage(graph, partition, mode=mode)


def _ordered_children(dend: Dendrogram, ref: int) -> Tuple[int, int]:
    merge = dend.merge_by_id[ref]

    def order(child: int):
        members = dend.members(child)
        return (-len(members), members[0])

    first, second = sorted((merge.left, merge.right), key=order)
    return first, second


def leaf_assignment(dend: Dendrogram) -> List[TreeNode]:
    """Tree node of every initial cluster in `tree_from_dendrogram(dend)`."""
    assignment: List[TreeNode] = [ROOT] * dend.K
    stack: List[Tuple[int, TreeNode]] = [(dend.root_id, ROOT)]
    while stack:
        ref, node = stack.pop()
        if dend.is_merge(ref):
            for index, child in enumerate(_ordered_children(dend, ref)):
                stack.append((child, node.child(index)))
        else:
            assignment[ref] = node
    return assignment


def tree_from_dendrogram(dend: Dendrogram) -> CommunityTree:
    """
    Binary community tree of a dendrogram: the final merge is the root; children are ordered
    by descending number of initial clusters, then by smallest contained cluster id.
    """
    return CommunityTree.from_paths(leaf_assignment(dend))


def labels_on_tree(dend: Dendrogram) -> Partition:
    """Initial partition relabelled so that label k is leaf k of `tree_from_dendrogram(dend)`."""
    tree = tree_from_dendrogram(dend)
    mapping = [tree.leaf_index(leaf) for leaf in leaf_assignment(dend)]
    return dend.initial_clusters.relabel(mapping)


def dendrogram_from_tree(graph: Graph, partition: Partition, tree: CommunityTree) -> Dendrogram:
    """
    Dendrogram of a binary tree whose leaves index the clusters of `partition` (label k is
    `tree.leaves[k]`). Each internal node merges its two children at the edge density between
    them; deeper nodes are merged first.
    """
    if partition.K != tree.K:
        raise ValidationError(f"partition has {partition.K} clusters, tree has {tree.K} leaves")
    if any(len(tree.children(u)) != 2 for u in tree.internal_nodes):
        raise ValidationError("dendrograms can only be read off binary trees")
    weights = cluster_weights(graph, partition)
    sizes = partition.sizes
    ref: Dict[TreeNode, int] = {leaf: k for k, leaf in enumerate(tree.leaves)}
    clusters: Dict[TreeNode, np.ndarray] = {leaf: np.array([k]) for k, leaf in enumerate(tree.leaves)}
    merges: List[Merge] = []
    for node in sorted(tree.internal_nodes, key=lambda u: (-u.depth, u.path)):
        left, right = tree.children(node)
        a, b = clusters[left], clusters[right]
        weight = int(weights[np.ix_(a, b)].sum())
        pairs = int(sizes[a].sum()) * int(sizes[b].sum())
        new_id = partition.K + len(merges)
        merges.append(
            Merge(left=ref[left], right=ref[right], similarity=weight / pairs, new_id=new_id, weight=weight, pairs=pairs)
        )
        ref[node] = new_id
        clusters[node] = np.concatenate([a, b])
    return Dendrogram(initial_clusters=partition, merges=tuple(merges))
