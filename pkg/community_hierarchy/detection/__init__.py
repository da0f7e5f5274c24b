"""
Detection subsystem exports.
"""

from .clusterers import BetheHessianClusterer, CorruptedClusterer, FlatClusterer, PlantedClusterer
from .errors import EigensolverError, HierarchyError, ValidationError
from .generator import (
    btsbm_params,
    corrupt_leaf_ids,
    corrupt_labels,
    geometric_btsbm_params,
    make_profile,
    params_by_depth,
    sample_hsbm,
    surviving_leaves,
    ternary_tree_params,
    tree_sbm_params,
)
from .linkage import (
    average_linkage,
    bottom_up_hcd,
    dendrogram_from_tree,
    edge_density,
    labels_on_tree,
    leaf_assignment,
    tree_from_dendrogram,
)
from .metrics import (
    accuracy_at_depth,
    clustering_loss,
    confusion_matrix,
    count_inversions,
    tree_error_ratio,
    tree_similarity_matrix,
)
from .models import (
    CommunityTree,
    Dendrogram,
    Graph,
    HsbmParams,
    LinkageMode,
    Merge,
    Method,
    NoiseKind,
    NoiseProfile,
    Partition,
    ThresholdReport,
    TreeNode,
    lca,
    super_communities,
    validate_params,
)
from .spectral import (
    SymmetricMatrix,
    bethe_hessian,
    estimate_num_communities,
    fiedler_bipartition,
    flat_cluster_bethe_hessian,
    kmeans,
    symmetric_eigs,
    top_down_dendrogram,
    top_down_hcd,
)
from .theory import (
    b_count,
    ch_divergence,
    eta_minus,
    eta_plus,
    expected_corrupted_densities,
    expected_linkage_recovery,
    feasible_depths,
    iq_btsbm,
    j_bottom_up,
    j_top_down,
    min_divergence_I,
    min_divergence_Iq,
    monotone_profile_condition,
    p_bar,
    predict_tree_recovery,
    renyi_divergence,
    robustness_lhs,
    scaled_divergence,
)

__all__ = [
    "BetheHessianClusterer",
    "CommunityTree",
    "CorruptedClusterer",
    "Dendrogram",
    "EigensolverError",
    "FlatClusterer",
    "Graph",
    "HierarchyError",
    "HsbmParams",
    "LinkageMode",
    "Merge",
    "Method",
    "NoiseKind",
    "NoiseProfile",
    "Partition",
    "PlantedClusterer",
    "SymmetricMatrix",
    "ThresholdReport",
    "TreeNode",
    "ValidationError",
    "accuracy_at_depth",
    "average_linkage",
    "b_count",
    "bethe_hessian",
    "bottom_up_hcd",
    "btsbm_params",
    "ch_divergence",
    "clustering_loss",
    "confusion_matrix",
    "corrupt_leaf_ids",
    "corrupt_labels",
    "count_inversions",
    "dendrogram_from_tree",
    "edge_density",
    "estimate_num_communities",
    "eta_minus",
    "eta_plus",
    "expected_corrupted_densities",
    "expected_linkage_recovery",
    "feasible_depths",
    "fiedler_bipartition",
    "flat_cluster_bethe_hessian",
    "geometric_btsbm_params",
    "iq_btsbm",
    "j_bottom_up",
    "j_top_down",
    "kmeans",
    "labels_on_tree",
    "lca",
    "leaf_assignment",
    "make_profile",
    "min_divergence_I",
    "min_divergence_Iq",
    "monotone_profile_condition",
    "p_bar",
    "params_by_depth",
    "predict_tree_recovery",
    "renyi_divergence",
    "robustness_lhs",
    "sample_hsbm",
    "scaled_divergence",
    "super_communities",
    "surviving_leaves",
    "symmetric_eigs",
    "ternary_tree_params",
    "top_down_dendrogram",
    "top_down_hcd",
    "tree_error_ratio",
    "tree_from_dendrogram",
    "tree_similarity_matrix",
    "tree_sbm_params",
    "validate_params",
]
