"""
Evaluation metrics: permutation-optimal clustering loss, accuracy at depth, the tree
similarity error ratio and dendrogram inversions.

Unequal cluster counts are handled by padding the smaller side with empty clusters, so a
spurious or missing cluster counts as fully mis-clustered.
"""

from __future__ import annotations

import math
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import ValidationError
from .models import CommunityTree, Dendrogram, Partition, TreeNode, coarsen_labels, lca


def confusion_matrix(truth: Partition, pred: Partition) -> np.ndarray:
    """Counts |C_k ∩ Ĉ_l| as a truth.K x pred.K integer matrix."""
    if truth.n != pred.n:
        raise ValidationError(f"partitions cover {truth.n} and {pred.n} nodes")
    flat = truth.labels * max(pred.K, 1) + pred.labels
    counts = np.bincount(flat, minlength=truth.K * pred.K)
    return counts.reshape(truth.K, pred.K)


def clustering_loss(truth: Partition, pred: Partition) -> int:
    """min over label matchings of sum_k |C_k Δ Ĉ_τ(k)| (each mis-clustered node counts twice)."""
    overlap = confusion_matrix(truth, pred)
    K = max(truth.K, pred.K)
    padded = np.zeros((K, K), dtype=np.int64)
    padded[: truth.K, : pred.K] = overlap
    sizes_truth = np.zeros(K, dtype=np.int64)
    sizes_truth[: truth.K] = truth.sizes
    sizes_pred = np.zeros(K, dtype=np.int64)
    sizes_pred[: pred.K] = pred.sizes
    cost = sizes_truth[:, None] + sizes_pred[None, :] - 2 * padded
    rows, cols = linear_sum_assignment(cost)
    return int(cost[rows, cols].sum())


def accuracy_at_depth(
    truth_labels: Partition,
    truth_tree: CommunityTree,
    pred_labels: Partition,
    pred_tree: CommunityTree,
    q: int,
) -> float:
    """1 - loss(super-communities at depth q) / N; q is clamped to each tree's depth."""
    if q < 1:
        raise ValidationError(f"depth q={q} must be at least 1")
    if truth_labels.n == 0:
        raise ValidationError("accuracy is undefined on zero nodes")
    truth_coarse = coarsen_labels(truth_tree, truth_labels, q)
    pred_coarse = coarsen_labels(pred_tree, pred_labels, q)
    return 1.0 - clustering_loss(truth_coarse, pred_coarse) / truth_labels.n


def _leaf_depths(tree: CommunityTree, leaves: Sequence[TreeNode]) -> np.ndarray:
    return np.array([[lca(a, b).depth for b in leaves] for a in leaves], dtype=np.int64)


def _resolve_leaves(tree: CommunityTree, labels: Partition, leaves: Optional[Sequence[TreeNode]]):
    if leaves is None:
        if labels.K > tree.K:
            raise ValidationError(f"labels use {labels.K} clusters but the tree has {tree.K} leaves")
        return list(tree.leaves[: labels.K])
    leaves = list(leaves)
    if len(leaves) < labels.K:
        raise ValidationError(f"{len(leaves)} leaves given for {labels.K} clusters")
    for leaf in leaves:
        if leaf not in tree or not tree.is_leaf(leaf):
            raise ValidationError(f"{leaf} is not a leaf of the tree")
    return leaves[: labels.K]


def tree_similarity_matrix(
    tree: CommunityTree,
    labels: Partition,
    leaves: Optional[Sequence[TreeNode]] = None,
) -> np.ndarray:
    """Dense N x N matrix of lca depths between the clusters of every node pair (small N only)."""
    depths = _leaf_depths(tree, _resolve_leaves(tree, labels, leaves))
    return depths[np.ix_(labels.labels, labels.labels)]


def tree_error_ratio(
    truth_tree: CommunityTree,
    pred_tree: CommunityTree,
    labels: Partition,
    pred_leaves: Optional[Sequence[TreeNode]] = None,
    pred_labels: Optional[Partition] = None,
    truth_leaves: Optional[Sequence[TreeNode]] = None,
) -> float:
    """
    ||S(pred) - S(truth)||_F^2 / ||S(truth)||_F^2, aggregated over cluster pairs instead of
    node pairs. Cluster k of `labels` sits on `truth_leaves[k]` (default: truth leaf k). On the
    predicted side nodes are placed by `pred_labels` (default: the same `labels`), cluster k on
    `pred_leaves[k]` (default: pred leaf k).
    """
    pred_labels = labels if pred_labels is None else pred_labels
    truth_depths = _leaf_depths(truth_tree, _resolve_leaves(truth_tree, labels, truth_leaves))
    pred_depths = _leaf_depths(pred_tree, _resolve_leaves(pred_tree, pred_labels, pred_leaves))
    # nodes grouped by their (truth cluster, predicted cluster) cell
    joint = confusion_matrix(labels, pred_labels)
    t_idx, p_idx = np.nonzero(joint)
    counts = joint[t_idx, p_idx].astype(np.int64)
    weights = np.outer(counts, counts)
    truth_cells = truth_depths[np.ix_(t_idx, t_idx)]
    pred_cells = pred_depths[np.ix_(p_idx, p_idx)]
    numerator = int(np.sum(weights * (pred_cells - truth_cells) ** 2))
    denominator = int(np.sum(weights * truth_cells**2))
    if denominator == 0:
        return 0.0 if numerator == 0 else math.inf
    return numerator / denominator


def count_inversions(dend: Dendrogram) -> int:
    """Merges whose similarity strictly exceeds that of one of their child merges."""
    inversions = 0
    for merge in dend.merges:
        height = merge.exact_similarity
        for child in (merge.left, merge.right):
            if dend.is_merge(child) and height > dend.merge_by_id[child].exact_similarity:
                inversions += 1
                break
    return inversions
