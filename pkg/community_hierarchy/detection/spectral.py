"""
Spectral building blocks: the Bethe-Hessian flat clusterer and the top-down recursive
bipartitioning baseline, with the eigensolver and k-means plumbing both use.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import List, Literal, Optional, Tuple

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import ArpackNoConvergence, eigsh
from sklearn.cluster import KMeans

from .errors import EigensolverError, ValidationError
from .linkage import dendrogram_from_tree
from .models import ROOT, CommunityTree, Dendrogram, Graph, Partition, TreeNode

logger = logging.getLogger(__name__)

DENSE_LIMIT = 2048
RESIDUAL_TOLERANCE = 1e-8
DEFAULT_MIN_SIZE = 20
KMEANS_RESTARTS = 10
KMEANS_MAX_ITER = 300
KMEANS_TOL = 1e-6
_LANCZOS_MAXITER = 10_000
_NEGATIVE_BATCH = 16

Which = Literal["smallest", "largest"]


@dataclass(frozen=True, eq=False)
class SymmetricMatrix:
    """Real symmetric matrix stored as its upper triangle (diagonal included)."""

    upper: sparse.csr_matrix

    def __post_init__(self):
        matrix = sparse.triu(sparse.csr_matrix(self.upper, dtype=float)).tocsr()
        if matrix.shape[0] != matrix.shape[1]:
            raise ValidationError(f"matrix must be square, got shape {matrix.shape}")
        object.__setattr__(self, "upper", matrix)

    @classmethod
    def from_dense(cls, values: np.ndarray) -> "SymmetricMatrix":
        values = np.asarray(values, dtype=float)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise ValidationError(f"matrix must be square, got shape {values.shape}")
        return cls(sparse.csr_matrix(np.triu(values)))

    @classmethod
    def from_sparse(cls, values: sparse.spmatrix) -> "SymmetricMatrix":
        return cls(sparse.triu(values).tocsr())

    @property
    def n(self) -> int:
        return int(self.upper.shape[0])

    def full(self) -> sparse.csr_matrix:
        strict = sparse.triu(self.upper, k=1)
        return (self.upper + strict.T).tocsr()

    def to_dense(self) -> np.ndarray:
        return self.full().toarray()

    def norm(self) -> float:
        """Frobenius norm, an upper bound of the spectral norm."""
        full = self.full()
        return float(math.sqrt(full.multiply(full).sum()))

    def matvec(self, vectors: np.ndarray) -> np.ndarray:
        return self.full() @ vectors


def adjacency_operator(graph: Graph) -> SymmetricMatrix:
    return SymmetricMatrix.from_sparse(graph.adjacency.astype(float))


def bethe_hessian(graph: Graph, r: float) -> SymmetricMatrix:
    """H(r) = (r^2 - 1) I - r A + D."""
    n = graph.n
    diagonal = (r * r - 1.0) + graph.degrees.astype(float)
    matrix = sparse.diags(diagonal, format="csr", shape=(n, n)) - r * graph.adjacency.astype(float)
    return SymmetricMatrix.from_sparse(matrix)


def critical_radius(graph: Graph) -> float:
    """r_c = sqrt(sum d_i^2 / sum d_i - 1)."""
    degrees = graph.degrees.astype(float)
    total = degrees.sum()
    if total == 0:
        raise ValidationError("the Bethe-Hessian radius is undefined on an edgeless graph")
    return math.sqrt(max(float((degrees**2).sum() / total) - 1.0, 0.0))


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    if vectors.size == 0:
        return vectors
    rows = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[rows, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def symmetric_eigs(
    m: SymmetricMatrix,
    k: int,
    which: Which = "smallest",
    dense_limit: int = DENSE_LIMIT,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    k eigenpairs from one end of the spectrum. "smallest" returns ascending eigenvalues,
    "largest" descending ones, so index 0 is always the extreme value. Every eigenvector has
    its largest-magnitude entry positive.
    """
    n = m.n
    if not 1 <= k <= n:
        raise ValidationError(f"requested {k} eigenpairs of a {n}x{n} matrix")
    if which not in ("smallest", "largest"):
        raise ValidationError(f"unknown spectrum end {which!r}")

    if n <= dense_limit or k >= n - 1:
        values, vectors = np.linalg.eigh(m.to_dense())
        if which == "smallest":
            values, vectors = values[:k], vectors[:, :k]
        else:
            values, vectors = values[::-1][:k], vectors[:, ::-1][:, :k]
    else:
        try:
            values, vectors = eigsh(
                m.full(), k=k, which="SA" if which == "smallest" else "LA", tol=0.0, maxiter=_LANCZOS_MAXITER
            )
        except ArpackNoConvergence as exc:
            raise EigensolverError(f"Lanczos did not converge for {k} eigenpairs of a {n}x{n} matrix") from exc
        order = np.argsort(values)
        if which == "largest":
            order = order[::-1]
        values, vectors = values[order], vectors[:, order]

    vectors = _fix_signs(vectors)
    scale = m.norm()
    residuals = np.linalg.norm(m.matvec(vectors) - vectors * values, axis=0)
    worst = float(residuals.max()) if residuals.size else 0.0
    if worst > RESIDUAL_TOLERANCE * scale:
        raise EigensolverError(f"eigenpair residual above {RESIDUAL_TOLERANCE:g}*||M||", residual=worst)
    return values, vectors


def _count_negative(m: SymmetricMatrix, dense_limit: int) -> int:
    n = m.n
    if n <= dense_limit:
        return int(np.count_nonzero(np.linalg.eigvalsh(m.to_dense()) < 0.0))
    k = min(_NEGATIVE_BATCH, n)
    while True:
        values, _ = symmetric_eigs(m, k, "smallest", dense_limit=dense_limit)
        negative = int(np.count_nonzero(values < 0.0))
        if negative < k or k == n:
            return negative
        k = min(2 * k, n)


def estimate_num_communities(graph: Graph, dense_limit: int = DENSE_LIMIT) -> int:
    """Number of negative eigenvalues of H(r_c), floored at 1; n for an edgeless graph."""
    if graph.n == 0:
        raise ValidationError("cannot estimate communities of an empty graph")
    if graph.number_of_edges == 0:
        logger.warning("edgeless graph on %d nodes: every node is its own community", graph.n)
        return graph.n
    hessian = bethe_hessian(graph, critical_radius(graph))
    return max(1, _count_negative(hessian, dense_limit))


def _fit_kmeans(points: np.ndarray, k: int, seed: int) -> KMeans:
    model = KMeans(
        n_clusters=k,
        init="k-means++",
        n_init=KMEANS_RESTARTS,
        max_iter=KMEANS_MAX_ITER,
        tol=KMEANS_TOL,
        random_state=int(seed) % 2**32,
    )
    return model.fit(points)


def kmeans(points: np.ndarray, k: int, seed: int = 0) -> Partition:
    points = np.atleast_2d(np.asarray(points, dtype=float))
    n = points.shape[0]
    if not 1 <= k <= n:
        raise ValidationError(f"k={k} must lie in [1, {n}]")
    if k == 1:
        return Partition(np.zeros(n, dtype=np.int64))
    return Partition(_fit_kmeans(points, k, seed).labels_)


def _normalize_rows(embedding: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(embedding, axis=1, keepdims=True)
    return np.divide(embedding, norms, out=np.zeros_like(embedding), where=norms > 0)


def flat_cluster_bethe_hessian(
    graph: Graph,
    seed: int = 0,
    dense_limit: int = DENSE_LIMIT,
    num_communities: Optional[int] = None,
    normalize_rows: bool = True,
) -> Partition:
    """
    Embed nodes with the eigenvectors of the K̂ most negative eigenvalues of H(r_c) and cluster
    the embedding with k-means. Isolated nodes do not take part in fitting the centroids and are
    assigned to the nearest one afterwards.

    With `normalize_rows` (the default) every embedding row is scaled to unit length before
    k-means; False clusters the raw eigenvector rows.
    """
    n = graph.n
    if n == 0:
        raise ValidationError("cannot cluster an empty graph")
    if graph.number_of_edges == 0:
        logger.warning("edgeless graph: returning singleton clusters")
        return Partition(np.arange(n, dtype=np.int64))
    k = num_communities or estimate_num_communities(graph, dense_limit=dense_limit)
    if k <= 1:
        return Partition(np.zeros(n, dtype=np.int64))

    hessian = bethe_hessian(graph, critical_radius(graph))
    _, vectors = symmetric_eigs(hessian, k, "smallest", dense_limit=dense_limit)
    embedding = _normalize_rows(vectors) if normalize_rows else vectors

    isolated = graph.degrees == 0
    fit_rows = embedding[~isolated]
    if fit_rows.shape[0] < k:
        fit_rows = embedding
    elif isolated.any():
        logger.warning("%d isolated nodes assigned to their nearest centroid", int(isolated.sum()))
    model = _fit_kmeans(fit_rows, k, seed)
    return Partition(model.predict(embedding))


def fiedler_bipartition(graph: Graph, dense_limit: int = DENSE_LIMIT) -> Tuple[np.ndarray, np.ndarray]:
    """
    Split by the sign of the eigenvector of the second-largest adjacency eigenvalue (>= 0 on the
    first side). Disconnected graphs are split into their largest component and the rest.
    """
    n = graph.n
    if n < 2:
        raise ValidationError("bipartition needs at least two nodes")
    count, components = graph.connected_components()
    if count > 1:
        largest = int(np.argmax(np.bincount(components)))
        inside = components == largest
        return np.flatnonzero(inside), np.flatnonzero(~inside)

    _, vectors = symmetric_eigs(adjacency_operator(graph), 2, "largest", dense_limit=dense_limit)
    fiedler = vectors[:, 1]
    first = fiedler >= 0.0
    if first.all():
        logger.warning("sign split left one side empty; moving the smallest entry across")
        first[int(np.argmin(fiedler))] = False
    elif not first.any():
        logger.warning("sign split left one side empty; moving the largest entry across")
        first[int(np.argmax(fiedler))] = True
    return np.flatnonzero(first), np.flatnonzero(~first)


def top_down_hcd(
    graph: Graph,
    min_size: int = DEFAULT_MIN_SIZE,
    dense_limit: int = DENSE_LIMIT,
) -> Tuple[Partition, CommunityTree]:
    """
    Recursive spectral bipartitioning. A part becomes a leaf when it is smaller than
    `min_size`, has no internal edge, or its Bethe-Hessian estimate finds a single community.
    Label k of the returned partition is leaf k of the returned tree.
    """
    if graph.n < 1:
        raise ValidationError("top-down detection needs a non-empty graph")
    floor = max(int(min_size), 2)
    leaves: List[Tuple[TreeNode, np.ndarray]] = []
    stack: List[Tuple[TreeNode, np.ndarray]] = [(ROOT, np.arange(graph.n, dtype=np.int64))]
    while stack:
        node, members = stack.pop()
        if node.depth > graph.n:
            raise RuntimeError("top-down recursion exceeded the node count")
        sub = graph.subgraph(members)
        if members.size < floor or sub.number_of_edges == 0:
            leaves.append((node, members))
            continue
        if estimate_num_communities(sub, dense_limit=dense_limit) <= 1:
            leaves.append((node, members))
            continue
        first, second = fiedler_bipartition(sub, dense_limit=dense_limit)
        logger.debug("split %s (%d nodes) into %d + %d", node, members.size, first.size, second.size)
        stack.append((node.child(1), members[second]))
        stack.append((node.child(0), members[first]))

    tree = CommunityTree.from_paths(leaf for leaf, _ in leaves)
    labels = np.empty(graph.n, dtype=np.int64)
    for leaf, members in leaves:
        labels[members] = tree.leaf_index(leaf)
    return Partition(labels), tree


def top_down_dendrogram(
    graph: Graph,
    min_size: int = DEFAULT_MIN_SIZE,
    dense_limit: int = DENSE_LIMIT,
) -> Tuple[Partition, CommunityTree, Dendrogram]:
    """top_down_hcd plus the dendrogram of its recursion tree, heights = child-pair densities."""
    partition, tree = top_down_hcd(graph, min_size=min_size, dense_limit=dense_limit)
    return partition, tree, dendrogram_from_tree(graph, partition, tree)
