"""
N-way K-shot episodes drawn from a labelled feature set
"""
from dataclasses import dataclass

import torch


@dataclass
class FeatureSet:
    features: torch.Tensor
    labels: torch.Tensor

    def __post_init__(self):
        self.labels = torch.as_tensor(self.labels, dtype=torch.long)
        if self.features.dim() != 2:
            raise ValueError("features must be an (items, dim) matrix")
        if len(self.features) != len(self.labels):
            raise ValueError("features and labels differ in length")

    def classes(self):
        return torch.unique(self.labels)

    def items_of(self, label):
        return torch.nonzero(self.labels == label).flatten()


@dataclass
class Episode:
    """Support and query items with episode-local labels 0..way-1"""
    way: int
    shot: int
    query: int
    classes: torch.Tensor
    support_index: torch.Tensor
    query_index: torch.Tensor
    support_labels: torch.Tensor
    query_labels: torch.Tensor
    support: torch.Tensor
    queries: torch.Tensor


def sample_episode(dataset, way, shot, query, generator):
    """Classes and items drawn uniformly without replacement"""
    if way < 1 or shot < 1 or query < 1:
        raise ValueError("way, shot and query must all be >= 1")
    need = shot + query
    eligible = [c for c in dataset.classes().tolist()
                if len(dataset.items_of(c)) >= need]
    if len(eligible) < way:
        raise ValueError(
            f"{way}-way {shot}-shot {query}-query episodes need {way} "
            f"classes with {need} items, found {len(eligible)}"
        )
    order = torch.randperm(len(eligible), generator=generator)[:way]
    classes = torch.tensor([eligible[i] for i in order.tolist()])
    support, queries = [], []
    for c in classes.tolist():
        items = dataset.items_of(c)
        picked = items[torch.randperm(len(items), generator=generator)[:need]]
        support.append(picked[:shot])
        queries.append(picked[shot:])
    support_index = torch.cat(support)
    query_index = torch.cat(queries)
    local = torch.arange(way)
    return Episode(
        way=way,
        shot=shot,
        query=query,
        classes=classes,
        support_index=support_index,
        query_index=query_index,
        support_labels=local.repeat_interleave(shot),
        query_labels=local.repeat_interleave(query),
        support=dataset.features[support_index],
        queries=dataset.features[query_index],
    )
