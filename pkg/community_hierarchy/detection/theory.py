"""
Recovery thresholds for hierarchical SBMs.

Divergences between Bernoulli edge profiles, the minimal Chernoff-Hellinger divergence I and
its depth-restricted version I_q, the closed forms for binary-tree SBMs, the J^td / J^bu
feasibility scores, and the label-corruption robustness condition with its eta bounds.

Everything here is closed form or a deterministic 1-d optimisation; no sampling.
"""

from __future__ import annotations

import itertools
import math
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import ValidationError
from .models import (
    CommunityTree,
    DepthThresholds,
    HsbmParams,
    NoiseProfile,
    ThresholdReport,
    TreeNode,
    lca,
)

T_LOWER = 1e-9
T_UPPER = 1.0 - 1e-9
T_TOLERANCE = 1e-10
_LOG_FLOOR = 1e-300


def _check_increasing(values: Sequence[float], name: str) -> None:
    if any(later <= earlier for earlier, later in zip(values, values[1:])):
        raise ValidationError(f"{name}={tuple(values)} must be strictly increasing")


def _bernoulli_affinity(t: float, p: float, q: float) -> float:
    return (1.0 - p) ** t * (1.0 - q) ** (1.0 - t) + p**t * q ** (1.0 - t)


def renyi_divergence(t: float, p: float, q: float) -> float:
    """Order-t Rényi divergence between Ber(p) and Ber(q); +inf when the supports are disjoint."""
    if not 0.0 < t < 1.0:
        raise ValidationError(f"order t={t} outside (0, 1)")
    if not (0.0 <= p <= 1.0 and 0.0 <= q <= 1.0):
        raise ValidationError(f"probabilities ({p}, {q}) outside [0, 1]")
    if {p, q} == {0.0, 1.0}:
        return math.inf
    if t == 0.5:
        # exact symmetry in (p, q)
        affinity = math.sqrt((1.0 - p) * (1.0 - q)) + math.sqrt(p * q)
    else:
        affinity = _bernoulli_affinity(t, p, q)
    return math.log(max(affinity, _LOG_FLOOR)) / (t - 1.0)


def hellinger_divergence(p: float, q: float) -> float:
    return renyi_divergence(0.5, p, q)


def _ch_objective(t: float, weights: np.ndarray, pa: np.ndarray, pb: np.ndarray) -> float:
    affinity = (1.0 - pa) ** t * (1.0 - pb) ** (1.0 - t) + pa**t * pb ** (1.0 - t)
    return float(-np.sum(weights * np.log(np.maximum(affinity, _LOG_FLOOR))))


def ch_profile_divergence(weights: Sequence[float], pa: Sequence[float], pb: Sequence[float]) -> float:
    """
    sup_t (1-t) sum_c w_c D_t(Ber(pa_c) || Ber(pb_c)), i.e. sup_t -sum_c w_c log(affinity_t).
    The objective is concave in t, so a bounded scalar search finds the maximum.
    """
    weights = np.asarray(weights, dtype=float)
    pa = np.asarray(pa, dtype=float)
    pb = np.asarray(pb, dtype=float)
    disjoint = ((pa == 0.0) & (pb == 1.0)) | ((pa == 1.0) & (pb == 0.0))
    if np.any(disjoint & (weights > 0)):
        return math.inf
    if np.array_equal(pa, pb):
        return 0.0
    result = minimize_scalar(
        lambda t: -_ch_objective(t, weights, pa, pb),
        bounds=(T_LOWER, T_UPPER),
        method="bounded",
        options={"xatol": T_TOLERANCE},
    )
    best = -float(result.fun)
    if not result.success or not math.isfinite(best):
        grid = np.linspace(T_LOWER, T_UPPER, 10_001)
        best = max(_ch_objective(t, weights, pa, pb) for t in grid)
    return max(best, 0.0)


def ch_divergence(a: TreeNode, b: TreeNode, params: HsbmParams) -> float:
    tree = params.tree
    if a == b:
        raise ValidationError("Chernoff-Hellinger divergence needs two distinct leaves")
    for leaf in (a, b):
        if leaf not in tree or not tree.is_leaf(leaf):
            raise ValidationError(f"{leaf} is not a leaf of the tree")
    leaves = tree.leaves
    pa = [params.link_probability(a, c) for c in leaves]
    pb = [params.link_probability(b, c) for c in leaves]
    return ch_profile_divergence(params.pi, pa, pb)


def _leaf_pairs(tree: CommunityTree):
    return itertools.combinations(tree.leaves, 2)


def min_divergence_I(params: HsbmParams) -> float:
    if params.K < 2:
        raise ValidationError("the minimal divergence needs at least two leaves")
    return min(ch_divergence(a, b, params) for a, b in _leaf_pairs(params.tree))


def min_divergence_Iq(params: HsbmParams, q: int) -> float:
    """Minimal CH divergence over leaf pairs whose lca sits at depth <= q-1."""
    depth = params.depth
    if not 1 <= q <= depth:
        raise ValidationError(f"depth q={q} outside [1, {depth}]")
    values = [ch_divergence(a, b, params) for a, b in _leaf_pairs(params.tree) if lca(a, b).depth <= q - 1]
    return min(values)


def iq_btsbm(d: int, p: Sequence[float], q: int) -> float:
    """Closed form of I_q for a binary-tree SBM with depth-indexed probabilities p_0..p_d."""
    p = [float(x) for x in p]
    if len(p) != d + 1:
        raise ValidationError(f"expected {d + 1} probabilities, got {len(p)}")
    _check_increasing(p, "p")
    if not 1 <= q <= d:
        raise ValidationError(f"depth q={q} outside [1, {d}]")
    total = hellinger_divergence(p[q - 1], p[d])
    for k in range(1, d - q + 1):
        total += 2 ** (k - 1) * hellinger_divergence(p[q - 1], p[d - k])
    return total / 2**d


def _check_rates(q: int, a: Sequence[float]) -> int:
    d = len(a) - 1
    if d < 1:
        raise ValidationError("rates need at least a_0 and a_1")
    _check_increasing(a, "a")
    if not 1 <= q <= d:
        raise ValidationError(f"depth q={q} outside [1, {d}]")
    return d


def j_top_down(q: int, a: Sequence[float]) -> float:
    a = [float(x) for x in a]
    d = _check_rates(q, a)
    inside = a[d] + sum(2 ** (k - 1) * a[d - k] for k in range(1, d - q + 1))
    return (math.sqrt(inside) - math.sqrt(2 ** (d - q) * a[q - 1])) ** 2 / 2**d


def j_bottom_up(q: int, a: Sequence[float]) -> float:
    a = [float(x) for x in a]
    d = _check_rates(q, a)
    root = math.sqrt(a[q - 1])
    total = (root - math.sqrt(a[d])) ** 2
    total += sum(2 ** (k - 1) * (root - math.sqrt(a[d - k])) ** 2 for k in range(1, d - q + 1))
    return total / 2**d


def scaled_divergence(divergence: float, n: int) -> float:
    """N * I / log N, the unit in which the exact-recovery threshold equals 1."""
    if n < 2:
        raise ValidationError("n must be at least 2")
    return n * divergence / math.log(n)


def feasible_depths(a: Sequence[float], n: Optional[int] = None) -> ThresholdReport:
    """
    J^td / J^bu for every depth, with I_q of the matching binary-tree SBM. When n is given the
    raw divergence uses p_k = a_k log(n)/n; otherwise I_q is reported in a-units (log N / N = 1).
    """
    a = tuple(float(x) for x in a)
    d = len(a) - 1
    _check_rates(1, a)
    if n is not None:
        scale = math.log(n) / n
        probabilities = [x * scale for x in a]
    else:
        probabilities = None

    records = []
    smallest_td = math.inf
    for q in range(1, d + 1):
        j_td = j_top_down(q, a)
        j_bu = j_bottom_up(q, a)
        smallest_td = min(smallest_td, j_td)
        if probabilities is not None:
            raw = iq_btsbm(d, probabilities, q)
            scaled = scaled_divergence(raw, n)
        else:
            # sparse-regime leading term: D_1/2(a log N/N, b log N/N) ~ (sqrt a - sqrt b)^2 log N/N
            raw = j_bottom_up(q, a)
            scaled = raw
        records.append(
            DepthThresholds(
                q=q,
                I_q=raw,
                scaled_I_q=scaled,
                J_td=j_td,
                J_bu=j_bu,
                feasible_td=smallest_td > 1.0,
                feasible_bu=j_bu > 1.0,
            )
        )
    return ThresholdReport(a=a, n=n, depths=tuple(records))


def b_count(h: int, d: int) -> int:
    """Number of leaves whose lca with a fixed leaf of a depth-d binary tree has depth h."""
    if not -1 <= h <= d:
        raise ValidationError(f"similarity depth h={h} outside [-1, {d}]")
    if h == d:
        return 1
    return 2 ** (d - h - 1)


def p_bar(h: int, d: int, p: Sequence[float]) -> float:
    """Expected edge density inside a depth-(h-1) super-community."""
    if not 1 <= h <= d:
        raise ValidationError(f"depth h={h} outside [1, {d}]")
    if len(p) != d + 1:
        raise ValidationError(f"expected {d + 1} probabilities, got {len(p)}")
    return sum(b_count(s, d) * float(p[s]) for s in range(h, d + 1)) / b_count(h - 1, d)


def robustness_lhs(d: int, p: Sequence[float], profile: NoiseProfile, h_ac: int) -> float:
    """
    Left-hand side of the recovery condition for average linkage started from labels corrupted
    with `profile`; the tree is recovered when this is positive for every h_ac <= d-2.
    """
    p = [float(x) for x in p]
    if len(p) != d + 1:
        raise ValidationError(f"expected {d + 1} probabilities, got {len(p)}")
    if profile.d != d:
        raise ValidationError(f"profile depth {profile.d} does not match d={d}")
    if not 0 <= h_ac <= d - 2:
        raise ValidationError(f"h_ac={h_ac} outside [0, {d - 2}]")
    zeta = profile.zeta
    B = lambda h: b_count(h, d)  # noqa: E731
    base = zeta[h_ac]

    total = 0.0
    for h1 in range(h_ac + 1, d):
        shift1 = zeta[h1] - base
        for h2 in range(h1 + 1, d + 1):
            total += 2.0 * B(h1) * B(h2) * shift1 * (zeta[h2] - base) * (p[h1] - p[h_ac])
        total += B(h1) ** 2 * shift1**2 * (p_bar(h1 + 1, d, p) - p[h_ac])
    total += (p[d - 1] - p[h_ac]) * (zeta[d] - base) ** 2
    total += 2.0 * (p[d] - p[d - 1]) * (zeta[d - 1] - base) * (zeta[d] - (zeta[d - 1] + base) / 2.0)
    return total


def predict_tree_recovery(d: int, p: Sequence[float], profile: NoiseProfile) -> bool:
    if d < 2:
        return True
    return all(robustness_lhs(d, p, profile, h_ac) > 0.0 for h_ac in range(d - 1))


def _adversarial_roots(d: int, p: Sequence[float]):
    p = [float(x) for x in p]
    if len(p) != d + 1:
        raise ValidationError(f"expected {d + 1} probabilities, got {len(p)}")
    _check_increasing(p, "p")
    bar = p_bar(1, d, p)
    P = bar - p[0]
    Q = p[d - 1] - p[0]
    radicand = max(P * (P - Q), 0.0)
    denominator = 3.0 * P + Q
    return bar, (P + Q - math.sqrt(radicand)) / denominator, (P + Q + math.sqrt(radicand)) / denominator


def eta_minus(d: int, p: Sequence[float]) -> Optional[float]:
    """
    Largest adversarial noise level still guaranteeing recovery when the first-level
    super-communities are denser than the deepest cross links; None when every eta < 1/2 works.
    """
    bar, lower, _ = _adversarial_roots(d, p)
    if bar < float(p[d - 1]):
        return None
    return lower


def eta_plus(d: int, p: Sequence[float]) -> Optional[float]:
    bar, _, upper = _adversarial_roots(d, p)
    if bar < float(p[d - 1]):
        return None
    return upper


def monotone_profile_condition(profile: NoiseProfile) -> bool:
    """Sufficient condition: ζ non-decreasing in h and the mean of ζ(d-1), ζ(d-2) below 1-eta."""
    zeta = profile.zeta
    d = profile.d
    if any(later < earlier for earlier, later in zip(zeta, zeta[1:])):
        return False
    if d < 2:
        return zeta[d - 1] < 1.0 - profile.eta
    return (zeta[d - 1] + zeta[d - 2]) / 2.0 < 1.0 - profile.eta


def expected_corrupted_densities(d: int, p: Sequence[float], profile: NoiseProfile) -> np.ndarray:
    """
    Expected edge density between corrupted clusters of a balanced binary-tree SBM with equal
    leaf sizes: Z P Z^T where Z[a, x] = ζ(|lca(a, x)|) is the share of block x relabelled to a.
    """
    p = [float(x) for x in p]
    if len(p) != d + 1:
        raise ValidationError(f"expected {d + 1} probabilities, got {len(p)}")
    if profile.d != d:
        raise ValidationError(f"profile depth {profile.d} does not match d={d}")
    leaves = CommunityTree.balanced(2, d).leaves
    depths = np.array([[lca(a, b).depth for b in leaves] for a in leaves])
    mixing = np.asarray(profile.zeta)[depths]
    return mixing @ np.asarray(p)[depths] @ mixing.T


def expected_linkage_recovery(d: int, p: Sequence[float], profile: NoiseProfile) -> bool:
    """
    Runs average linkage on the expected corrupted densities and reports whether every merge
    joins two clusters whose union is a subtree of the planted tree. Ties keep the first pair
    in scan order.
    """
    densities = expected_corrupted_densities(d, p, profile)
    tree = CommunityTree.balanced(2, d)
    leaves = tree.leaves
    subtrees = {
        frozenset(k for k, leaf in enumerate(leaves) if node.is_prefix_of(leaf)) for node in tree.nodes
    }
    clusters = [frozenset([k]) for k in range(len(leaves))]
    while len(clusters) > 1:
        best = None
        for i, j in itertools.combinations(range(len(clusters)), 2):
            block = densities[np.ix_(sorted(clusters[i]), sorted(clusters[j]))]
            value = float(block.mean())
            if best is None or value > best[0] + 1e-15:
                best = (value, i, j)
        _, i, j = best
        merged = clusters[i] | clusters[j]
        if merged not in subtrees:
            return False
        clusters = [c for k, c in enumerate(clusters) if k not in (i, j)] + [merged]
    return True
