import math

import numpy as np
import pytest

from community_hierarchy.detection import (
    CommunityTree,
    HsbmParams,
    TreeNode,
    ValidationError,
    ch_divergence,
    eta_minus,
    eta_plus,
    expected_linkage_recovery,
    feasible_depths,
    geometric_btsbm_params,
    iq_btsbm,
    j_bottom_up,
    j_top_down,
    make_profile,
    min_divergence_I,
    min_divergence_Iq,
    monotone_profile_condition,
    p_bar,
    predict_tree_recovery,
    renyi_divergence,
    robustness_lhs,
    tree_sbm_params,
)
from community_hierarchy.detection.theory import (
    b_count,
    expected_corrupted_densities,
    scaled_divergence,
)


def _depth_probabilities(params):
    return [params.p[params.tree.nodes_at_depth(k)[0]] for k in range(params.depth + 1)]


def _increasing(rng, size, low=0.5, high=10.0):
    return np.cumsum(rng.uniform(low, high, size))


@pytest.mark.parametrize(
    "a, expected",
    [
        ((2.2, 2.5, 3, 25), (0.96, 1.17, 1.33)),
        ((3, 9, 15, 21), (1.89, 0.39, 0.06)),
    ],
)
def test_top_down_scores_reference_values(a, expected):
    values = [j_top_down(q, a) for q in (1, 2, 3)]
    assert values == pytest.approx(list(expected), abs=0.005)


def test_top_down_scores_interlacing_example():
    # the non-monotone case: recoverable at depths 1 and 3 but not 2 in between
    values = [j_top_down(q, (2.2, 2.4, 4, 22)) for q in (1, 2, 3)]
    assert values == pytest.approx([0.8342, 1.0572, 0.9048], abs=5e-4)
    assert values[0] < values[1] > values[2]


def test_bottom_up_scores():
    assert j_bottom_up(2, (40, 45, 50, 100)) == pytest.approx(1.371, abs=1e-3)
    assert j_bottom_up(2, (40, 60, 65, 100)) == pytest.approx(0.648, abs=1e-3)
    with pytest.raises(ValidationError):
        j_bottom_up(0, (1, 2, 3))
    with pytest.raises(ValidationError):
        j_top_down(1, (3, 2, 4))


def test_bottom_up_dominates_top_down():
    rng = np.random.default_rng(17)
    for _ in range(1000):
        d = int(rng.integers(2, 6))
        a = _increasing(rng, d + 1)
        for q in range(1, d):
            assert j_bottom_up(q, a) > j_top_down(q, a)
        assert abs(j_bottom_up(d, a) - j_top_down(d, a)) <= 1e-12


def test_renyi_divergence_edges():
    assert renyi_divergence(0.5, 0.3, 0.3) == 0.0
    assert renyi_divergence(0.3, 0.0, 1.0) == math.inf
    assert renyi_divergence(0.5, 0.2, 0.6) == pytest.approx(renyi_divergence(0.5, 0.6, 0.2))
    with pytest.raises(ValidationError):
        renyi_divergence(1.0, 0.2, 0.3)


def test_closed_form_iq_matches_pairwise_minimum():
    rng = np.random.default_rng(5)
    for _ in range(100):
        d = int(rng.integers(1, 4))
        n = int(rng.integers(500, 5000))
        a = _increasing(rng, d + 1, low=1.0, high=8.0)
        params = tree_sbm_params(2, d, a, n)
        p = _depth_probabilities(params)
        for q in range(1, d + 1):
            assert iq_btsbm(d, p, q) == pytest.approx(min_divergence_Iq(params, q), rel=1e-8)
        assert min_divergence_I(params) == pytest.approx(min_divergence_Iq(params, d), rel=1e-12)


def _random_assortative_params(rng, d):
    tree = CommunityTree.balanced(2, d)
    p = {}
    for node in sorted(tree.nodes, key=lambda u: u.depth):
        base = 0.0 if node.depth == 0 else p[node.parent()]
        p[node] = base + float(rng.uniform(0.005, 0.2))
    pi = rng.dirichlet(np.full(tree.K, 3.0))
    return HsbmParams(tree=tree, pi=tuple(pi / pi.sum()), p=p)


def _grid_maximum(weights, pa, pb, grid):
    t = grid[:, None]
    affinity = (1.0 - pa) ** t * (1.0 - pb) ** (1.0 - t) + pa**t * pb ** (1.0 - t)
    return float(np.max(-(np.log(affinity) @ weights)))


@pytest.mark.slow
def test_depth_restricted_divergence_shrinks_with_depth():
    # I_q is a minimum over leaf pairs with lca depth <= q - 1, a set that grows with q
    rng = np.random.default_rng(41)
    for _ in range(500):
        params = _random_assortative_params(rng, int(rng.integers(2, 4)))
        values = [min_divergence_Iq(params, q) for q in range(1, params.depth + 1)]
        assert all(later <= earlier for earlier, later in zip(values, values[1:]))
        assert values[-1] == pytest.approx(min_divergence_I(params), rel=1e-12)


def test_ch_divergence_matches_grid_search():
    rng = np.random.default_rng(8)
    grid = np.linspace(1e-9, 1.0 - 1e-9, 100_001)
    asymmetric = HsbmParams(
        tree=CommunityTree.balanced(2, 1),
        pi=(0.3, 0.7),
        p={TreeNode(()): 0.05, TreeNode((0,)): 0.4, TreeNode((1,)): 0.15},
    )
    instances = [asymmetric]
    while len(instances) < 100:
        if len(instances) % 2:
            instances.append(_random_assortative_params(rng, int(rng.integers(1, 3))))
        else:
            instances.append(tree_sbm_params(2, 2, _increasing(rng, 3, low=1.0, high=6.0), 800))
    for params in instances:
        leaves = params.tree.leaves
        x, y = sorted(rng.choice(len(leaves), 2, replace=False).tolist())
        a, b = leaves[x], leaves[y]
        weights = np.asarray(params.pi)
        pa = np.array([params.link_probability(a, c) for c in leaves])
        pb = np.array([params.link_probability(b, c) for c in leaves])
        oracle = _grid_maximum(weights, pa, pb, grid)
        assert ch_divergence(a, b, params) == pytest.approx(oracle, rel=1e-8)


@pytest.mark.parametrize(
    "d, a",
    [
        (2, (2, 5, 12)),
        (3, (40, 60, 80, 100)),
    ],
)
def test_min_divergence_leading_term(d, a):
    n = 10**6
    params = tree_sbm_params(2, d, a, n)
    leading = (math.sqrt(a[-1]) - math.sqrt(a[-2])) ** 2 / params.K * math.log(n) / n
    assert min_divergence_I(params) == pytest.approx(leading, rel=0.05)


def test_feasible_depths_report():
    report = feasible_depths((40, 45, 50, 100))
    assert report.n is None
    row = report.at(2)
    assert row.J_bu == pytest.approx(1.371, abs=1e-3)
    assert row.feasible_bu and not row.feasible_td
    assert report.at(1).feasible_td

    sized = feasible_depths((40, 60, 80, 100), n=3200)
    params = tree_sbm_params(2, 3, (40, 60, 80, 100), 3200)
    raw = iq_btsbm(3, _depth_probabilities(params), 3)
    assert sized.at(3).I_q == pytest.approx(raw)
    assert sized.at(3).scaled_I_q == pytest.approx(scaled_divergence(raw, 3200))


def test_b_count_and_p_bar():
    assert [b_count(h, 3) for h in range(-1, 4)] == [8, 4, 2, 1, 1]
    for h in range(0, 4):
        assert sum(b_count(s, 3) for s in range(h, 4)) == b_count(h - 1, 3)
    p = [0.01, 0.02, 0.04, 0.08]
    assert p_bar(1, 3, p) == pytest.approx((2 * 0.02 + 0.04 + 0.08) / 4)
    assert p_bar(1, 2, [0.1, 0.2, 0.5]) == pytest.approx(0.35)
    assert p_bar(3, 3, p) == pytest.approx(0.08)


def test_adversarial_lhs_closed_forms():
    rng = np.random.default_rng(31)
    for _ in range(200):
        d = int(rng.integers(2, 4))
        p = np.sort(rng.uniform(0.001, 0.9, d + 1))
        eta = float(rng.uniform(0.0, 0.99))
        profile = make_profile("adversarial", eta, d)
        bar = p_bar(1, d, p)
        expected = (eta**2 - 2 * eta * (1 - eta)) * (bar - p[0]) + (p[d - 1] - p[0]) * (1 - eta) ** 2
        assert robustness_lhs(d, p, profile, 0) == pytest.approx(expected, abs=1e-10)

    for d in (3, 4):
        p = np.sort(rng.uniform(0.001, 0.9, d + 1))
        profile = make_profile("adversarial", 0.3, d)
        for h_ac in range(1, d - 1):
            expected = (p[d - 1] - p[h_ac]) * 0.7**2
            assert robustness_lhs(d, p, profile, h_ac) == pytest.approx(expected, abs=1e-12)


def test_eta_minus_bounds():
    half = _depth_probabilities(geometric_btsbm_params(3, 2.0))
    assert eta_minus(3, half) == pytest.approx(0.5)

    u = 0.01
    p = [1 * u, 2 * u, 3 * u, 10 * u]
    lower = eta_minus(3, p)
    assert 0.0 < lower < 0.5
    assert eta_plus(3, p) > lower
    below = make_profile("adversarial", lower - 1e-4, 3)
    above = make_profile("adversarial", lower + 1e-4, 3)
    assert robustness_lhs(3, p, below, 0) > 0
    assert robustness_lhs(3, p, above, 0) < 0

    # first-level super-communities sparser than the deepest cross links
    assert eta_minus(3, _depth_probabilities(geometric_btsbm_params(3, 0.75))) is None


def test_monotone_profile_condition():
    assert monotone_profile_condition(make_profile("uniform", 0.5, 3))
    assert not monotone_profile_condition(make_profile("adversarial", 0.2, 3))
    assert monotone_profile_condition(make_profile("nearest", 0.3, 3))
    assert not monotone_profile_condition(make_profile("nearest", 0.6, 3))


def test_uniform_noise_keeps_tree_recoverable():
    p = _depth_probabilities(geometric_btsbm_params(3, 2.0))
    for eta in (0.0, 0.3, 0.5, 0.8):
        profile = make_profile("uniform", eta, 3)
        assert predict_tree_recovery(3, p, profile)
        assert expected_linkage_recovery(3, p, profile)


def test_expected_densities_without_noise_are_the_model():
    p = [0.01, 0.02, 0.04, 0.08]
    densities = expected_corrupted_densities(3, p, make_profile("uniform", 0.0, 3))
    assert densities[0, 0] == pytest.approx(0.08)
    assert densities[0, 1] == pytest.approx(0.04)
    assert densities[0, 2] == pytest.approx(0.02)
    assert densities[0, 7] == pytest.approx(0.01)


def test_expected_linkage_matches_lhs_on_two_levels():
    p = _depth_probabilities(geometric_btsbm_params(2, 0.25))
    lower = eta_minus(2, p)
    assert lower == pytest.approx(0.1550, abs=1e-3)
    for eta in (lower / 2, 0.45):
        profile = make_profile("adversarial", eta, 2)
        assert expected_linkage_recovery(2, p, profile) == (robustness_lhs(2, p, profile, 0) > 0)
    assert expected_linkage_recovery(2, p, make_profile("adversarial", lower / 2, 2))
    assert not expected_linkage_recovery(2, p, make_profile("adversarial", 0.45, 2))


def test_adversarial_cousins_bind_before_siblings():
    p = _depth_probabilities(geometric_btsbm_params(3, 2.0))
    profile = make_profile("adversarial", 0.25, 3)
    assert robustness_lhs(3, p, profile, 0) == pytest.approx(0.0075)
    assert predict_tree_recovery(3, p, profile)
    densities = expected_corrupted_densities(3, p, profile)
    # cousins (leaves 0 and 2) end up sparser than root-separated blocks (0 and 4)
    assert densities[0, 2] == pytest.approx(0.0175)
    assert densities[0, 4] == pytest.approx(0.02125)
    assert not expected_linkage_recovery(3, p, profile)
    assert expected_linkage_recovery(3, p, make_profile("adversarial", 0.05, 3))
