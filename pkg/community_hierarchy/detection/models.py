from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from functools import cached_property
from typing import Dict, FrozenSet, Iterable, Iterator, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components

from .errors import ValidationError

PI_TOLERANCE = 1e-12


class NoiseKind(str, Enum):
    UNIFORM = "uniform"
    ADVERSARIAL = "adversarial"
    NEAREST = "nearest"


class LinkageMode(str, Enum):
    ASSORTATIVE = "assortative"
    DISASSORTATIVE = "disassortative"


class Method(str, Enum):
    BOTTOM_UP = "bottom-up"
    TOP_DOWN = "top-down"
    BOTH = "both"

    def expand(self) -> List["Method"]:
        if self is Method.BOTH:
            return [Method.BOTTOM_UP, Method.TOP_DOWN]
        return [self]


@dataclass(frozen=True, order=True)
class TreeNode:
    """
    A node of a community tree, labelled by the child indices followed from the root.
    The root is the empty path; `depth` is the path length.
    """

    path: Tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "path", tuple(int(i) for i in self.path))
        if any(i < 0 for i in self.path):
            raise ValidationError(f"negative child index in path {self.path}")

    @classmethod
    def parse(cls, text: str) -> "TreeNode":
        text = text.strip()
        if text in ("", "-"):
            return cls(())
        if not text.isdigit():
            raise ValidationError(f"invalid tree node label: {text!r}")
        return cls(tuple(int(ch) for ch in text))

    @property
    def depth(self) -> int:
        return len(self.path)

    @property
    def is_root(self) -> bool:
        return not self.path

    def parent(self) -> Optional["TreeNode"]:
        if self.is_root:
            return None
        return TreeNode(self.path[:-1])

    def child(self, index: int) -> "TreeNode":
        return TreeNode(self.path + (index,))

    def ancestor(self, depth: int) -> "TreeNode":
        return TreeNode(self.path[: max(depth, 0)])

    def is_prefix_of(self, other: "TreeNode") -> bool:
        return other.path[: len(self.path)] == self.path

    def __str__(self) -> str:
        return "-" if self.is_root else "".join(str(i) for i in self.path)


ROOT = TreeNode(())


def lca(u: TreeNode, v: TreeNode) -> TreeNode:
    """Lowest common ancestor: the longest common prefix of the two paths."""
    common = 0
    for a, b in zip(u.path, v.path):
        if a != b:
            break
        common += 1
    return TreeNode(u.path[:common])


@dataclass(frozen=True)
class CommunityTree:
    """
    Rooted tree of communities. Nodes are kept sorted lexicographically by path, which
    fixes the leaf order (and therefore cluster ids) everywhere downstream.
    """

    nodes: Tuple[TreeNode, ...]

    def __post_init__(self):
        ordered = tuple(sorted(set(self.nodes)))
        if not ordered or not ordered[0].is_root:
            raise ValidationError("community tree must contain the root (empty path)")
        members = set(ordered)
        for node in ordered:
            parent = node.parent()
            if parent is not None and parent not in members:
                raise ValidationError(f"node {node} has no parent {parent} in the tree")
        object.__setattr__(self, "nodes", ordered)

    @classmethod
    def from_paths(cls, paths: Iterable[Sequence[int] | TreeNode]) -> "CommunityTree":
        closure = {ROOT}
        for item in paths:
            node = item if isinstance(item, TreeNode) else TreeNode(tuple(item))
            for depth in range(node.depth + 1):
                closure.add(node.ancestor(depth))
        return cls(tuple(closure))

    @classmethod
    def balanced(cls, arity: int, depth: int) -> "CommunityTree":
        if arity < 1 or depth < 0:
            raise ValidationError(f"invalid balanced tree shape arity={arity} depth={depth}")
        level = [ROOT]
        nodes = [ROOT]
        for _ in range(depth):
            level = [u.child(i) for u in level for i in range(arity)]
            nodes.extend(level)
        return cls(tuple(nodes))

    @cached_property
    def _children(self) -> Dict[TreeNode, Tuple[TreeNode, ...]]:
        children: Dict[TreeNode, List[TreeNode]] = {u: [] for u in self.nodes}
        for node in self.nodes:
            parent = node.parent()
            if parent is not None:
                children[parent].append(node)
        return {u: tuple(sorted(kids)) for u, kids in children.items()}

    @cached_property
    def leaves(self) -> Tuple[TreeNode, ...]:
        return tuple(u for u in self.nodes if not self._children[u])

    @cached_property
    def internal_nodes(self) -> FrozenSet[TreeNode]:
        return frozenset(u for u in self.nodes if self._children[u])

    @cached_property
    def _leaf_index(self) -> Dict[TreeNode, int]:
        return {leaf: idx for idx, leaf in enumerate(self.leaves)}

    @property
    def root(self) -> TreeNode:
        return ROOT

    @property
    def K(self) -> int:
        return len(self.leaves)

    @cached_property
    def depth(self) -> int:
        return max(leaf.depth for leaf in self.leaves)

    @cached_property
    def arity(self) -> int:
        return max((len(kids) for kids in self._children.values()), default=0)

    def __contains__(self, node: object) -> bool:
        return node in self._children

    def children(self, node: TreeNode) -> Tuple[TreeNode, ...]:
        try:
            return self._children[node]
        except KeyError:
            raise ValidationError(f"node {node} is not in the tree") from None

    def is_leaf(self, node: TreeNode) -> bool:
        return not self.children(node)

    def leaf_index(self, node: TreeNode) -> int:
        try:
            return self._leaf_index[node]
        except KeyError:
            raise ValidationError(f"node {node} is not a leaf of the tree") from None

    def is_binary(self) -> bool:
        return all(len(kids) in (0, 2) for kids in self._children.values())

    def is_full_balanced(self, arity: Optional[int] = None) -> bool:
        arity = self.arity if arity is None else arity
        if any(leaf.depth != self.depth for leaf in self.leaves):
            return False
        return all(len(self._children[u]) == arity for u in self.internal_nodes)

    def nodes_at_depth(self, q: int) -> List[TreeNode]:
        return [u for u in self.nodes if u.depth == q]

    def super_community_nodes(self, q: int) -> List[TreeNode]:
        """S_q: nodes at depth q plus the leaves shallower than q."""
        return [u for u in self.nodes if u.depth == q or (u.depth < q and self.is_leaf(u))]


@dataclass(frozen=True, eq=False)
class Partition:
    """
    Node labelling into clusters 0..K-1. Labels are dense-relabelled at construction
    (sorted order of the raw ids is preserved), so no cluster is ever empty.
    """

    labels: np.ndarray

    def __post_init__(self):
        raw = np.asarray(self.labels)
        if raw.ndim != 1:
            raise ValidationError("partition labels must be a 1-d sequence")
        if raw.size and not np.issubdtype(raw.dtype, np.integer):
            if not np.all(np.equal(np.mod(raw, 1), 0)):
                raise ValidationError("partition labels must be integers")
        if raw.size:
            _, dense = np.unique(raw.astype(np.int64), return_inverse=True)
            dense = dense.reshape(-1).astype(np.int64)
        else:
            dense = np.zeros(0, dtype=np.int64)
        dense.setflags(write=False)
        object.__setattr__(self, "labels", dense)

    @classmethod
    def from_clusters(cls, clusters: Sequence[Iterable[int]], n: int) -> "Partition":
        labels = np.full(n, -1, dtype=np.int64)
        for cluster_id, members in enumerate(clusters):
            for node in members:
                if labels[node] != -1:
                    raise ValidationError(f"node {node} belongs to more than one cluster")
                labels[node] = cluster_id
        if np.any(labels < 0):
            raise ValidationError("every node must belong to a cluster")
        return cls(labels)

    @property
    def n(self) -> int:
        return int(self.labels.size)

    @property
    def K(self) -> int:
        return int(self.labels.max()) + 1 if self.labels.size else 0

    @cached_property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.K)

    def clusters(self) -> List[np.ndarray]:
        order = np.argsort(self.labels, kind="stable")
        bounds = np.cumsum(self.sizes)[:-1]
        return np.split(order, bounds) if self.K else []

    def relabel(self, mapping: Sequence[int]) -> "Partition":
        return Partition(np.asarray(mapping, dtype=np.int64)[self.labels])

    def restrict(self, nodes: Sequence[int]) -> "Partition":
        return Partition(self.labels[np.asarray(nodes, dtype=np.int64)])

    def __len__(self) -> int:
        return self.n

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Partition):
            return NotImplemented
        return np.array_equal(self.labels, other.labels)

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True, eq=False)
class Graph:
    """
    Undirected simple graph on nodes 0..n-1. Edges are stored once as (i, j) rows with
    i < j, sorted lexicographically.
    """

    n: int
    edge_array: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=np.int64))

    def __post_init__(self):
        if self.n < 0:
            raise ValidationError("node count must be non-negative")
        arr = np.asarray(self.edge_array, dtype=np.int64).reshape(-1, 2)
        if arr.size:
            lo = np.minimum(arr[:, 0], arr[:, 1])
            hi = np.maximum(arr[:, 0], arr[:, 1])
            if np.any(lo == hi):
                raise ValidationError("self-loops are not allowed")
            if lo.min() < 0 or hi.max() >= self.n:
                raise ValidationError(f"edge endpoint outside 0..{self.n - 1}")
            arr = np.unique(np.column_stack([lo, hi]), axis=0)
        arr.setflags(write=False)
        object.__setattr__(self, "edge_array", arr)

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[Tuple[int, int]]) -> "Graph":
        return cls(n, np.array(list(edges), dtype=np.int64).reshape(-1, 2))

    @property
    def number_of_edges(self) -> int:
        return int(self.edge_array.shape[0])

    @cached_property
    def adjacency(self) -> sparse.csr_matrix:
        rows = np.concatenate([self.edge_array[:, 0], self.edge_array[:, 1]])
        cols = np.concatenate([self.edge_array[:, 1], self.edge_array[:, 0]])
        data = np.ones(rows.size, dtype=np.int64)
        return sparse.csr_matrix((data, (rows, cols)), shape=(self.n, self.n))

    @cached_property
    def degrees(self) -> np.ndarray:
        return np.asarray(self.adjacency.sum(axis=1)).reshape(-1)

    def neighbors(self, node: int) -> np.ndarray:
        adj = self.adjacency
        return adj.indices[adj.indptr[node] : adj.indptr[node + 1]]

    def edges(self) -> Iterator[Tuple[int, int]]:
        for i, j in self.edge_array:
            yield int(i), int(j)

    def has_edge(self, i: int, j: int) -> bool:
        return j in set(self.neighbors(i).tolist())

    def subgraph(self, nodes: Sequence[int]) -> "Graph":
        """Induced subgraph, relabelled so that nodes[k] becomes node k."""
        nodes = np.asarray(nodes, dtype=np.int64)
        position = np.full(self.n, -1, dtype=np.int64)
        position[nodes] = np.arange(nodes.size)
        mapped = position[self.edge_array]
        keep = np.all(mapped >= 0, axis=1) if mapped.size else np.zeros(0, dtype=bool)
        return Graph(int(nodes.size), mapped[keep])

    def connected_components(self) -> Tuple[int, np.ndarray]:
        count, labels = connected_components(self.adjacency, directed=False)
        return int(count), labels

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Graph):
            return NotImplemented
        return self.n == other.n and np.array_equal(self.edge_array, other.edge_array)

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True)
class HsbmParams:
    tree: CommunityTree
    pi: Tuple[float, ...]
    p: Dict[TreeNode, float]

    def __post_init__(self):
        object.__setattr__(self, "pi", tuple(float(x) for x in self.pi))
        object.__setattr__(self, "p", {node: float(value) for node, value in self.p.items()})

    __hash__ = None  # type: ignore[assignment]

    @property
    def K(self) -> int:
        return self.tree.K

    @property
    def depth(self) -> int:
        return self.tree.depth

    def link_probability(self, a: TreeNode, b: TreeNode) -> float:
        return self.p[lca(a, b)]

    def probability_matrix(self) -> np.ndarray:
        leaves = self.tree.leaves
        return np.array([[self.link_probability(a, b) for b in leaves] for a in leaves])


def validate_params(params: HsbmParams) -> List[str]:
    """Return one message per violated HsbmParams invariant (empty when valid)."""
    violations: List[str] = []
    tree = params.tree
    if len(params.pi) != tree.K:
        violations.append(f"pi has {len(params.pi)} entries for {tree.K} leaves")
    for idx, weight in enumerate(params.pi):
        if not 0.0 < weight <= 1.0:
            violations.append(f"pi[{idx}]={weight} outside (0, 1]")
    total = float(np.sum(params.pi)) if params.pi else 0.0
    if abs(total - 1.0) > PI_TOLERANCE:
        violations.append(f"pi sums to {total!r}, expected 1")
    for node in params.p:
        if node not in tree:
            violations.append(f"probability given for node {node} outside the tree")
    for node in tree.nodes:
        if node not in params.p:
            violations.append(f"missing link probability at node {node}")
            continue
        value = params.p[node]
        if not 0.0 <= value <= 1.0:
            violations.append(f"p({node})={value} outside [0, 1]")
        parent = node.parent()
        if parent is not None and parent in params.p and not params.p[parent] < value:
            violations.append(
                f"assortativity violated at node {node}: p({parent})={params.p[parent]} >= p({node})={value}"
            )
    return violations


def coarsen_labels(tree: CommunityTree, labels: Partition, q: int) -> Partition:
    """Map leaf labels to their super-community in S_q, clamping q to the tree depth."""
    if labels.K > tree.K:
        raise ValidationError(f"labels use {labels.K} clusters but the tree has {tree.K} leaves")
    q = min(max(q, 0), tree.depth)
    targets = tree.super_community_nodes(q)
    index = {node: idx for idx, node in enumerate(targets)}
    mapping = [index[leaf.ancestor(min(q, leaf.depth))] for leaf in tree.leaves]
    return labels.relabel(mapping)


def super_communities(tree: CommunityTree, labels: Partition, q: int) -> Partition:
    if not 1 <= q <= tree.depth:
        raise ValidationError(f"depth q={q} outside [1, {tree.depth}]")
    return coarsen_labels(tree, labels, q)


@dataclass(frozen=True)
class Merge:
    left: int
    right: int
    similarity: float
    new_id: int
    weight: Optional[int] = None
    pairs: Optional[int] = None

    @property
    def exact_similarity(self) -> Fraction:
        if self.weight is not None and self.pairs:
            return Fraction(self.weight, self.pairs)
        return Fraction(self.similarity)


@dataclass(frozen=True, eq=False)
class Dendrogram:
    """
    Ordered merges over the clusters of `initial_clusters`. Initial clusters are
    referenced by their ids 0..K-1, merged clusters by the `new_id` of their merge.
    """

    initial_clusters: Partition
    merges: Tuple[Merge, ...]

    def __post_init__(self):
        object.__setattr__(self, "merges", tuple(self.merges))
        K = self.initial_clusters.K
        if K and len(self.merges) != K - 1:
            raise ValidationError(f"expected {K - 1} merges for {K} clusters, got {len(self.merges)}")
        available = set(range(K))
        seen_ids = set(range(K))
        for merge in self.merges:
            for ref in (merge.left, merge.right):
                if ref not in available:
                    raise ValidationError(f"merge {merge} references unavailable cluster {ref}")
                available.discard(ref)
            if merge.left == merge.right:
                raise ValidationError(f"merge {merge} joins a cluster with itself")
            if merge.new_id in seen_ids:
                raise ValidationError(f"merge id {merge.new_id} is not fresh")
            if merge.similarity < 0:
                raise ValidationError(f"merge {merge} has negative similarity")
            seen_ids.add(merge.new_id)
            available.add(merge.new_id)

    @property
    def K(self) -> int:
        return self.initial_clusters.K

    @property
    def root_id(self) -> int:
        return self.merges[-1].new_id if self.merges else 0

    @cached_property
    def merge_by_id(self) -> Dict[int, Merge]:
        return {merge.new_id: merge for merge in self.merges}

    @cached_property
    def _members(self) -> Dict[int, Tuple[int, ...]]:
        members: Dict[int, Tuple[int, ...]] = {k: (k,) for k in range(self.K)}
        for merge in self.merges:
            members[merge.new_id] = tuple(sorted(members[merge.left] + members[merge.right]))
        return members

    def members(self, ref: int) -> Tuple[int, ...]:
        """Initial cluster ids contained in cluster `ref`."""
        return self._members[ref]

    def is_merge(self, ref: int) -> bool:
        return ref in self.merge_by_id


@dataclass(frozen=True)
class NoiseProfile:
    """ζ(h) for h = 0..d: probability of relabelling a node into one given leaf at lca depth h."""

    zeta: Tuple[float, ...]
    d: int

    def __post_init__(self):
        object.__setattr__(self, "zeta", tuple(float(z) for z in self.zeta))
        if len(self.zeta) != self.d + 1:
            raise ValidationError(f"noise profile needs {self.d + 1} values, got {len(self.zeta)}")

    def __call__(self, h: int) -> float:
        return self.zeta[h]

    @property
    def eta(self) -> float:
        return 1.0 - self.zeta[self.d]


@dataclass(frozen=True)
class DepthThresholds:
    q: int
    I_q: float
    scaled_I_q: float
    J_td: float
    J_bu: float
    feasible_td: bool
    feasible_bu: bool


@dataclass(frozen=True)
class ThresholdReport:
    a: Tuple[float, ...]
    n: Optional[int]
    depths: Tuple[DepthThresholds, ...]

    def at(self, q: int) -> DepthThresholds:
        for record in self.depths:
            if record.q == q:
                return record
        raise ValidationError(f"no threshold record for depth {q}")

    def rows(self) -> Mapping[int, DepthThresholds]:
        return {record.q: record for record in self.depths}
