import pytest

from community_hierarchy.detection import (
    CorruptedClusterer,
    bottom_up_hcd,
    eta_minus,
    expected_linkage_recovery,
    geometric_btsbm_params,
    leaf_assignment,
    make_profile,
    sample_hsbm,
    tree_error_ratio,
    tree_from_dendrogram,
)

pytestmark = pytest.mark.slow

N = 4000


def _depth_probabilities(params):
    return [params.p[params.tree.nodes_at_depth(k)[0]] for k in range(params.depth + 1)]


def _recovered(params, kind, eta, seed):
    graph, truth = sample_hsbm(params, N, seed=seed, fixed_sizes=True)
    profile = make_profile(kind, eta, params.depth)
    corrupted, dend = bottom_up_hcd(graph, CorruptedClusterer(truth, params.tree, profile, seed))
    tree = tree_from_dendrogram(dend)
    return tree_error_ratio(params.tree, tree, corrupted, pred_leaves=leaf_assignment(dend)) == 0.0


def test_uniform_noise_at_half_still_recovers_the_tree():
    params = geometric_btsbm_params(3, 2.0)
    assert all(_recovered(params, "uniform", 0.5, seed) for seed in range(10))


def test_adversarial_noise_around_the_two_level_bound():
    params = geometric_btsbm_params(2, 0.25)
    lower = eta_minus(2, _depth_probabilities(params))
    below = sum(_recovered(params, "adversarial", lower / 2, seed) for seed in range(10))
    above = sum(_recovered(params, "adversarial", min(0.45, 1.5 * lower), seed) for seed in range(10))
    assert below >= 9
    assert above <= 3


def test_adversarial_noise_on_three_levels_follows_expected_densities():
    params = geometric_btsbm_params(3, 2.0)
    p = _depth_probabilities(params)
    strong = make_profile("adversarial", 0.25, 3)
    weak = make_profile("adversarial", 0.05, 3)
    assert not expected_linkage_recovery(3, p, strong)
    assert expected_linkage_recovery(3, p, weak)
    assert sum(_recovered(params, "adversarial", 0.25, seed) for seed in range(10)) <= 3
    assert sum(_recovered(params, "adversarial", 0.05, seed) for seed in range(10)) >= 9
