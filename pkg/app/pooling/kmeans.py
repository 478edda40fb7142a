"""
K-means++ with restarts, run side by side as one batch of restarts
"""
import logging

import numpy as np

logger = logging.getLogger(__name__)

RESTARTS = 20
ITERATIONS = 100


def _sq_dist(points, centers):
    """(n, d) points against (R, k, d) centers -> (R, n, k)"""
    diff = points[None, :, None, :] - centers[:, None, :, :]
    return np.einsum("rnkd,rnkd->rnk", diff, diff)


def seed_centers(points, k, rng, restarts=1):
    """K-means++ seeding; returns (restarts, k) point indices.

    The first center is uniform, each later one is drawn with probability
    proportional to its squared distance from the chosen centers.
    """
    n = len(points)
    chosen = np.empty((restarts, k), dtype=np.int64)
    chosen[:, 0] = rng.integers(n, size=restarts)
    d2 = ((points[None] - points[chosen[:, 0]][:, None]) ** 2).sum(-1)
    for j in range(1, k):
        cdf = np.cumsum(d2, axis=-1)
        total = cdf[:, -1]
        r = rng.random(restarts) * total
        # inverse CDF, lowest index wins ties
        pick = (cdf <= r[:, None]).sum(axis=-1)
        for i in np.flatnonzero(total <= 0):
            # every remaining point sits on a center
            free = np.setdiff1d(np.arange(n), chosen[i, :j])
            pick[i] = free[0]
        chosen[:, j] = pick
        new = ((points[None] - points[pick][:, None]) ** 2).sum(-1)
        d2 = np.minimum(d2, new)
    return chosen


def _centroids(points, labels, k):
    onehot = (labels[..., None] == np.arange(k)).astype(np.float64)
    sums = np.einsum("rnk,nd->rkd", onehot, points)
    return sums / onehot.sum(axis=1)[..., None]


def _repair_empty(labels, d, k):
    """Move the farthest point of the largest cluster into each empty one"""
    for r in range(labels.shape[0]):
        counts = np.bincount(labels[r], minlength=k)
        while (counts == 0).any():
            empty = int(np.flatnonzero(counts == 0)[0])
            largest = int(counts.argmax())
            members = np.flatnonzero(labels[r] == largest)
            far = members[d[r, members, largest].argmax()]
            labels[r, far] = empty
            counts[largest] -= 1
            counts[empty] += 1
    return labels


def lloyd(points, centers, iterations=ITERATIONS):
    """Lloyd iterations for every restart; returns (labels, objective)"""
    k = centers.shape[1]
    for _ in range(iterations):
        d = _sq_dist(points, centers)
        labels = _repair_empty(d.argmin(axis=-1), d, k)
        updated = _centroids(points, labels, k)
        if np.array_equal(updated, centers):
            break
        centers = updated
    d = _sq_dist(points, centers)
    labels = _repair_empty(d.argmin(axis=-1), d, k)
    centers = _centroids(points, labels, k)
    objective = kmeans_objective(points, labels, centers)
    return labels, objective


def kmeans_objective(points, labels, centers):
    """Sum of squared distances to the assigned centers, per restart"""
    assigned = np.take_along_axis(centers, labels[..., None], axis=-2)
    return ((points[None] - assigned) ** 2).sum(axis=(-1, -2))


def canonical_labels(labels):
    """Renumber cluster ids by first occurrence"""
    values, first = np.unique(labels, return_index=True)
    rank = np.empty(values.max() + 1, dtype=np.int64)
    rank[values] = np.argsort(np.argsort(first))
    return rank[labels]


def kmeans(points, k, rng, restarts=RESTARTS, iterations=ITERATIONS):
    """Best of ``restarts`` K-means++ runs by objective, earliest on ties"""
    points = np.asarray(points, dtype=np.float64)
    n = len(points)
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    seeds = seed_centers(points, k, rng, restarts)
    labels, objective = lloyd(points, points[seeds], iterations)
    best = int(objective.argmin())
    logger.debug("k-means k=%d best restart %d objective %.6g",
                 k, best, objective[best])
    return canonical_labels(labels[best]), float(objective[best])
