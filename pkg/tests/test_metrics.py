import itertools

import numpy as np
import pytest

from community_hierarchy.detection import (
    CommunityTree,
    Dendrogram,
    Merge,
    Partition,
    TreeNode,
    ValidationError,
    accuracy_at_depth,
    clustering_loss,
    count_inversions,
    tree_error_ratio,
)
from community_hierarchy.detection.metrics import confusion_matrix, tree_similarity_matrix


def _brute_force_loss(truth, pred):
    K = max(truth.K, pred.K)
    best = None
    for perm in itertools.permutations(range(K)):
        total = 0
        for k in range(K):
            left = set(np.flatnonzero(truth.labels == k).tolist())
            right = set(np.flatnonzero(pred.labels == perm[k]).tolist())
            total += len(left ^ right)
        best = total if best is None else min(best, total)
    return best


def test_loss_matches_brute_force():
    rng = np.random.default_rng(12)
    for _ in range(200):
        n = 12
        truth = Partition(rng.integers(0, int(rng.integers(1, 5)), n))
        pred = Partition(rng.integers(0, int(rng.integers(1, 6)), n))
        assert clustering_loss(truth, pred) == _brute_force_loss(truth, pred)


def test_loss_examples():
    truth = Partition(np.array([0, 0, 1, 1]))
    assert clustering_loss(truth, Partition(np.array([1, 1, 0, 0]))) == 0
    assert clustering_loss(truth, Partition(np.array([0, 1, 1, 1]))) == 2
    # a spurious extra cluster costs its whole size
    assert clustering_loss(truth, Partition(np.array([0, 0, 1, 2]))) == 2
    with pytest.raises(ValidationError):
        clustering_loss(truth, Partition(np.array([0, 1])))


def test_confusion_matrix():
    truth = Partition(np.array([0, 0, 1, 1, 1]))
    pred = Partition(np.array([1, 0, 0, 0, 2]))
    assert confusion_matrix(truth, pred).tolist() == [[1, 1, 0], [2, 0, 1]]


def test_accuracy_at_depth_after_swapping_cousins():
    tree = CommunityTree.balanced(2, 2)
    truth = Partition(np.repeat([0, 1, 2, 3], 5))
    swapped = Partition(np.repeat([0, 2, 1, 3], 5))
    assert accuracy_at_depth(truth, tree, swapped, tree, 2) == 1.0
    assert accuracy_at_depth(truth, tree, swapped, tree, 1) == 0.0
    assert accuracy_at_depth(truth, tree, truth, tree, 5) == 1.0
    with pytest.raises(ValidationError):
        accuracy_at_depth(truth, tree, truth, tree, 0)


def test_tree_error_ratio_with_misplaced_leaves():
    tree = CommunityTree.balanced(2, 2)
    labels = Partition(np.repeat([0, 1, 2, 3], 3))
    misplaced = [TreeNode((0, 0)), TreeNode((1, 0)), TreeNode((0, 1)), TreeNode((1, 1))]
    assert tree_error_ratio(tree, tree, labels) == 0.0
    assert tree_error_ratio(tree, tree, labels, pred_leaves=misplaced) == pytest.approx(0.4)


def test_tree_error_ratio_with_an_empty_truth_leaf():
    tree = CommunityTree.balanced(2, 2)
    # leaf 01 holds no node, so the three clusters sit on leaves 00, 10 and 11
    labels = Partition(np.array([0, 0, 2, 2, 3, 3]))
    leaves = [TreeNode((0, 0)), TreeNode((1, 0)), TreeNode((1, 1))]
    assert tree_error_ratio(tree, tree, labels, pred_leaves=leaves, truth_leaves=leaves) == 0.0
    assert tree_error_ratio(tree, tree, labels, pred_leaves=leaves) > 0.0


def test_aggregated_ratio_matches_dense_matrices():
    rng = np.random.default_rng(4)
    truth_tree = CommunityTree.balanced(2, 2)
    pred_tree = CommunityTree.from_paths([(0,), (1, 0), (1, 1, 0), (1, 1, 1)])
    for _ in range(20):
        labels = Partition(rng.permutation(np.arange(40) % 4))
        pred = Partition(rng.integers(0, 4, 40))
        truth_s = tree_similarity_matrix(truth_tree, labels)
        pred_s = tree_similarity_matrix(pred_tree, pred)
        dense = np.sum((pred_s - truth_s) ** 2) / np.sum(truth_s**2)
        assert tree_error_ratio(truth_tree, pred_tree, labels, pred_labels=pred) == pytest.approx(dense)


def test_count_inversions():
    initial = Partition(np.array([0, 1, 2]))
    inverted = Dendrogram(initial, (Merge(0, 1, 0.2, 3), Merge(2, 3, 0.5, 4)))
    assert count_inversions(inverted) == 1
    monotone = Dendrogram(initial, (Merge(0, 1, 0.5, 3), Merge(2, 3, 0.2, 4)))
    assert count_inversions(monotone) == 0
