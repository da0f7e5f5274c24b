"""
Seeded HSBM sampling, tree-SBM parameter constructors and label-corruption noise.

Randomness comes from numpy's PCG64 `Generator`, seeded from a 64-bit integer through a
`SeedSequence`. Community labels and edges use separate child streams of that sequence, so
the edge draws never shift when the label draws change (and vice versa). Draw order is fixed:
nodes ascending, then cluster-pair blocks (a <= b) in lexicographic order, pairs inside a
block in lexicographic (i, j) order.
"""

from __future__ import annotations

import logging
import math
from typing import List, Sequence, Tuple

import numpy as np

from .errors import ValidationError
from .models import (
    CommunityTree,
    Graph,
    HsbmParams,
    NoiseKind,
    NoiseProfile,
    Partition,
    TreeNode,
    lca,
    validate_params,
)
from .theory import b_count

logger = logging.getLogger(__name__)

NORMALIZATION_TOLERANCE = 1e-12
_SKIP_CHUNK_FLOOR = 64


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """
    Deterministic PCG64 generator for `seed`; `stream` selects an independent child of
    the seed's SeedSequence.
    """
    sequence = np.random.SeedSequence(int(seed) % 2**64)
    return np.random.Generator(np.random.PCG64(sequence.spawn(stream + 1)[stream]))


def tree_sbm_params(arity: int, d: int, a: Sequence[float], n: int) -> HsbmParams:
    """Full balanced tree of the given arity with p(u) = a_{|u|} log(n) / n and uniform pi."""
    a = [float(x) for x in a]
    if len(a) != d + 1:
        raise ValidationError(f"expected {d + 1} rates a_0..a_{d}, got {len(a)}")
    if n < 2:
        raise ValidationError("n must be at least 2 to define log(n)/n rates")
    if any(later <= earlier for earlier, later in zip(a, a[1:])):
        raise ValidationError(f"rates {a} must be strictly increasing (assortativity)")
    scale = math.log(n) / n
    probabilities = [x * scale for x in a]
    if probabilities[-1] > 1.0:
        raise ValidationError(f"a_d log(n)/n = {probabilities[-1]:.4f} exceeds 1")
    if probabilities[0] < 0.0:
        raise ValidationError("rates must be non-negative")
    return params_by_depth(CommunityTree.balanced(arity, d), probabilities)


def btsbm_params(d: int, a: Sequence[float], n: int) -> HsbmParams:
    return tree_sbm_params(2, d, a, n)


def ternary_tree_params(d: int, a: Sequence[float], n: int) -> HsbmParams:
    return tree_sbm_params(3, d, a, n)


def params_by_depth(tree: CommunityTree, probabilities: Sequence[float]) -> HsbmParams:
    """Uniform-pi HSBM whose link probability depends only on the depth of the lca."""
    if len(probabilities) < tree.depth + 1:
        raise ValidationError(f"need {tree.depth + 1} depth probabilities, got {len(probabilities)}")
    p = {node: float(probabilities[node.depth]) for node in tree.nodes}
    pi = tuple([1.0 / tree.K] * tree.K)
    return HsbmParams(tree=tree, pi=pi, p=p)


def geometric_btsbm_params(d: int, beta: float, base: float = 0.08) -> HsbmParams:
    """
    BTSBM with p_k = base * b^(d-k), b = min(beta, 1/beta): the deepest level keeps `base`
    and each level up divides the probability by the same factor.
    """
    if beta <= 0 or beta == 1.0:
        raise ValidationError(f"beta must be positive and different from 1, got {beta}")
    ratio = min(beta, 1.0 / beta)
    probabilities = [base * ratio ** (d - k) for k in range(d + 1)]
    return params_by_depth(CommunityTree.balanced(2, d), probabilities)


def sample_community_labels(params: HsbmParams, n: int, seed: int, fixed_sizes: bool = False) -> np.ndarray:
    K = params.tree.K
    if fixed_sizes:
        return (np.arange(n, dtype=np.int64) * K) // n
    rng = make_rng(seed, stream=0)
    cumulative = np.cumsum(params.pi)
    cumulative[-1] = 1.0
    return np.searchsorted(cumulative, rng.random(n), side="right").astype(np.int64)


def _skip_positions(rng: np.random.Generator, p: float, total: int) -> np.ndarray:
    """Indices of successes among `total` Bernoulli(p) trials, by geometric skipping."""
    if total <= 0 or p <= 0.0:
        return np.zeros(0, dtype=np.int64)
    if p >= 1.0:
        return np.arange(total, dtype=np.int64)
    chunks: List[np.ndarray] = []
    position = -1
    expected = total * p
    chunk = max(_SKIP_CHUNK_FLOOR, int(expected + 4.0 * math.sqrt(expected) + 1))
    while True:
        gaps = rng.geometric(p, size=chunk)
        steps = position + np.cumsum(gaps)
        inside = steps[steps < total]
        chunks.append(inside)
        if inside.size < steps.size:
            break
        position = int(steps[-1])
    return np.concatenate(chunks).astype(np.int64)


def _triangle_pairs(index: np.ndarray, size: int) -> Tuple[np.ndarray, np.ndarray]:
    """Invert the lexicographic enumeration of pairs (i, j), i < j < size."""
    k = index.astype(np.float64)
    total = size * (size - 1) // 2
    i = size - 2 - np.floor(np.sqrt(-8.0 * k + 4.0 * size * (size - 1) - 7.0) / 2.0 - 0.5)
    i = i.astype(np.int64)
    # guard against floating round-off at row boundaries
    row_start = total - (size - i) * (size - i - 1) // 2
    i = np.where(index < row_start, i - 1, i)
    row_start = total - (size - i) * (size - i - 1) // 2
    next_start = total - (size - i - 1) * (size - i - 2) // 2
    i = np.where(index >= next_start, i + 1, i)
    row_start = total - (size - i) * (size - i - 1) // 2
    j = index - row_start + i + 1
    return i, j


def sample_hsbm(params: HsbmParams, n: int, seed: int, fixed_sizes: bool = False) -> Tuple[Graph, Partition]:
    """
    Sample a graph and its ground-truth leaf labels. Label k of the partition is leaf
    `params.tree.leaves[k]`; identical (params, n, seed, fixed_sizes) give identical output.
    """
    violations = validate_params(params)
    if violations:
        raise ValidationError("invalid HSBM parameters: " + "; ".join(violations))
    if n < 1:
        raise ValidationError("node count must be at least 1")

    labels = sample_community_labels(params, n, seed, fixed_sizes=fixed_sizes)
    K = params.tree.K
    counts = np.bincount(labels, minlength=K)
    empty = [str(params.tree.leaves[k]) for k in range(K) if counts[k] == 0]
    if empty:
        raise ValidationError(f"leaves {', '.join(empty)} received no node; increase n")

    members = [np.flatnonzero(labels == k) for k in range(K)]
    probabilities = params.probability_matrix()
    rng = make_rng(seed, stream=1)
    blocks: List[np.ndarray] = []
    for a in range(K):
        for b in range(a, K):
            p = float(probabilities[a, b])
            if a == b:
                size = members[a].size
                hits = _skip_positions(rng, p, size * (size - 1) // 2)
                if hits.size:
                    i, j = _triangle_pairs(hits, size)
                    blocks.append(np.column_stack([members[a][i], members[a][j]]))
            else:
                width = members[b].size
                hits = _skip_positions(rng, p, members[a].size * width)
                if hits.size:
                    blocks.append(np.column_stack([members[a][hits // width], members[b][hits % width]]))
    edges = np.concatenate(blocks) if blocks else np.zeros((0, 2), dtype=np.int64)
    graph = Graph(n, edges)
    logger.debug("sampled HSBM: n=%d K=%d edges=%d seed=%d", n, K, graph.number_of_edges, seed)
    return graph, Partition(labels)


def make_profile(kind: NoiseKind | str, eta: float, d: int) -> NoiseProfile:
    kind = NoiseKind(kind)
    if not 0.0 <= eta < 1.0:
        raise ValidationError(f"eta={eta} outside [0, 1)")
    if d < 1:
        raise ValidationError("noise profiles need a tree of depth >= 1")
    zeta = [0.0] * (d + 1)
    if kind is NoiseKind.UNIFORM:
        for h in range(d):
            zeta[h] = eta / (2**d - 1)
    elif kind is NoiseKind.ADVERSARIAL:
        zeta[0] = eta / 2 ** (d - 1)
    else:
        zeta[d - 1] = eta
    zeta[d] = 1.0 - eta
    return NoiseProfile(zeta=tuple(zeta), d=d)


def profile_mass(profile: NoiseProfile) -> float:
    return sum(b_count(h, profile.d) * profile.zeta[h] for h in range(profile.d + 1))


def corrupt_leaf_ids(truth: Partition, tree: CommunityTree, profile: NoiseProfile, seed: int) -> np.ndarray:
    """
    Relabel every node of block a into block b with probability ζ(|lca(a, b)|), independently
    per node (one uniform draw per node, ascending node order). Returns the new leaf index of
    every node; leaves may end up empty. The graph is never touched.
    """
    d = tree.depth
    if not tree.is_binary() or not tree.is_full_balanced(2):
        raise ValidationError("label corruption requires a full balanced binary tree")
    if profile.d != d:
        raise ValidationError(f"profile depth {profile.d} does not match tree depth {d}")
    mass = profile_mass(profile)
    if abs(mass - 1.0) > NORMALIZATION_TOLERANCE:
        raise ValidationError(f"noise profile is not normalised (sum B(h) zeta(h) = {mass!r})")
    if truth.K > tree.K:
        raise ValidationError(f"labels use {truth.K} clusters but the tree has {tree.K} leaves")

    leaves: Sequence[TreeNode] = tree.leaves
    transition = np.array([[profile(lca(a, b).depth) for b in leaves] for a in leaves])
    cumulative = np.cumsum(transition, axis=1)
    cumulative[:, -1] = 1.0
    rng = make_rng(seed, stream=2)
    draws = rng.random(truth.n)
    rows = cumulative[truth.labels]
    new_labels = np.sum(rows <= draws[:, None], axis=1).astype(np.int64)
    changed = int(np.count_nonzero(new_labels != truth.labels))
    logger.debug("corrupted %d of %d labels (eta=%.3f)", changed, truth.n, profile.eta)
    return new_labels


def corrupt_labels(truth: Partition, tree: CommunityTree, profile: NoiseProfile, seed: int) -> Partition:
    """
    `corrupt_leaf_ids` as a Partition. When noise empties a leaf the surviving clusters are
    renumbered densely; `surviving_leaves` maps them back to leaf indices.
    """
    leaf_ids = corrupt_leaf_ids(truth, tree, profile, seed)
    emptied = sorted(set(np.unique(truth.labels).tolist()) - set(np.unique(leaf_ids).tolist()))
    if emptied:
        logger.warning(
            "label corruption emptied leaves %s", ", ".join(str(tree.leaves[k]) for k in emptied)
        )
    return Partition(leaf_ids)


def surviving_leaves(leaf_ids: np.ndarray, tree: CommunityTree) -> List[TreeNode]:
    """Leaf of every cluster of `Partition(leaf_ids)`, in cluster order."""
    return [tree.leaves[k] for k in np.unique(leaf_ids).tolist()]
