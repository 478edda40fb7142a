"""
Cosine-prototype classification and episodic accuracy reports
"""
from dataclasses import dataclass, field
import logging
import math

import numpy as np
import torch
import torch.nn.functional as F

from fewshot.episodes import FeatureSet, sample_episode

logger = logging.getLogger(__name__)

Z_95 = 1.96


def _check_nonzero(features, name):
    if (features.norm(dim=-1) == 0).any():
        raise ValueError(f"{name} contains a zero-norm feature")


def prototypes(support, support_labels, way):
    """Normalised mean support feature per class, (way, D)"""
    sums = support.new_zeros(way, support.shape[-1]).index_add_(
        0, support_labels, support
    )
    return F.normalize(sums / torch.bincount(support_labels, minlength=way)
                       .to(support.dtype)[:, None], dim=-1)


def cosine_classify(episode):
    """Predicted local labels and accuracy of one episode.

    Ties go to the lowest class index.
    """
    _check_nonzero(episode.support, "support")
    _check_nonzero(episode.queries, "query")
    protos = prototypes(episode.support, episode.support_labels, episode.way)
    scores = F.normalize(episode.queries, dim=-1) @ protos.T
    predictions = scores.argmax(dim=-1)
    accuracy = (predictions == episode.query_labels).double().mean().item()
    return predictions, accuracy


@dataclass
class EvalReport:
    accuracy: float
    ci95: float
    episodes: int
    way: int = 5
    shot: int = 1
    query: int = 15
    accuracies: list = field(default_factory=list, repr=False)

    @classmethod
    def from_accuracies(cls, accuracies, way, shot, query):
        n = len(accuracies)
        if n == 0:
            raise ValueError("No episodes were evaluated")
        mean = math.fsum(accuracies) / n
        ci95 = Z_95 * float(np.std(accuracies)) / math.sqrt(n)
        return cls(mean, ci95, n, way, shot, query, list(accuracies))


def evaluate(extractor, images, labels, episodes, way, shot, query,
             generator):
    """Mean accuracy and 95% interval of ``episodes`` random episodes.

    ``extractor`` maps the image batch to one feature vector per image.
    """
    with torch.no_grad():
        features = extractor(images)
    dataset = FeatureSet(features, labels)
    accuracies = []
    for _ in range(episodes):
        episode = sample_episode(dataset, way, shot, query, generator)
        accuracies.append(cosine_classify(episode)[1])
    report = EvalReport.from_accuracies(accuracies, way, shot, query)
    logger.info(format_report(report))
    return report


def format_report(report):
    return (f"{report.way}-way {report.shot}-shot: "
            f"{100 * report.accuracy:.2f}% +- {100 * report.ci95:.2f}% "
            f"over {report.episodes} episodes")


def write_episode_accuracies(path, accuracies):
    """Tab-separated ``episode<TAB>accuracy`` lines under a header"""
    with open(path, "w") as f:
        f.write("episode\taccuracy\n")
        for i, accuracy in enumerate(accuracies):
            f.write(f"{i}\t{accuracy:.6f}\n")
