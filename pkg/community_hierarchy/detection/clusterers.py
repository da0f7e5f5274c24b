from __future__ import annotations

import logging

from .errors import ValidationError
from .generator import corrupt_labels
from .models import CommunityTree, Graph, NoiseProfile, Partition
from .spectral import DENSE_LIMIT, flat_cluster_bethe_hessian

logger = logging.getLogger(__name__)


class FlatClusterer:
    """
    First stage of bottom-up detection. Implementations should be stateless and reusable;
    instances are callable so they plug straight into `bottom_up_hcd`.
    """

    name = "abstract"

    def cluster(self, graph: Graph) -> Partition:
        raise NotImplementedError

    def __call__(self, graph: Graph) -> Partition:
        partition = self.cluster(graph)
        logger.debug("%s clusterer returned %d clusters", self.name, partition.K)
        return partition


class BetheHessianClusterer(FlatClusterer):
    name = "bethe-hessian"

    def __init__(self, seed: int = 0, dense_limit: int = DENSE_LIMIT):
        self.seed = seed
        self.dense_limit = dense_limit

    def cluster(self, graph: Graph) -> Partition:
        return flat_cluster_bethe_hessian(graph, seed=self.seed, dense_limit=self.dense_limit)


class PlantedClusterer(FlatClusterer):
    """Hands back known labels; used to run average linkage from the ground truth."""

    name = "planted"

    def __init__(self, labels: Partition):
        self.labels = labels

    def cluster(self, graph: Graph) -> Partition:
        if self.labels.n != graph.n:
            raise ValidationError(f"planted labels cover {self.labels.n} nodes, graph has {graph.n}")
        return self.labels


class CorruptedClusterer(PlantedClusterer):
    """Planted labels passed through label-corruption noise; the graph itself is ignored."""

    name = "corrupted"

    def __init__(self, labels: Partition, tree: CommunityTree, profile: NoiseProfile, seed: int):
        super().__init__(labels)
        self.tree = tree
        self.profile = profile
        self.seed = seed

    def cluster(self, graph: Graph) -> Partition:
        truth = super().cluster(graph)
        return corrupt_labels(truth, self.tree, self.profile, self.seed)
