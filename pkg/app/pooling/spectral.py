"""
Spectral tokens pooling.

Tokens are clustered by spectral clustering of their neighbour-restricted
attention graph and each cluster is replaced by the mean of its members.
The backward rule is selectable: ``copy`` hands every member the full
cluster gradient, ``adjoint`` is the exact derivative of averaging.
"""
from dataclasses import dataclass
import logging

import numpy as np
import torch

from numerics.linalg import symmetric_eig
from pooling import graph
from pooling.kmeans import ITERATIONS, RESTARTS, kmeans

logger = logging.getLogger(__name__)

BACKWARD_MODES = ("copy", "adjoint")
ASSIGNMENT_MAGIC = "# hctx-assignment"


@dataclass(frozen=True)
class ClusterAssignment:
    labels: np.ndarray
    n_clusters: int

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        if labels.ndim != 1 or len(labels) == 0:
            raise ValueError("labels must be a non-empty vector")
        if labels.min() < 0 or labels.max() >= self.n_clusters:
            raise ValueError(
                f"labels must lie in [0, {self.n_clusters})"
            )
        if (np.bincount(labels, minlength=self.n_clusters) == 0).any():
            raise ValueError("every cluster needs at least one token")
        object.__setattr__(self, "labels", labels)

    @property
    def n_tokens(self):
        return len(self.labels)

    @property
    def sizes(self):
        return np.bincount(self.labels, minlength=self.n_clusters)

    @classmethod
    def identity(cls, n):
        return cls(np.arange(n), n)


def spectral_embedding(laplacian, k):
    """Rows of the k smallest eigenvectors, each scaled to unit length"""
    _, vectors = symmetric_eig(laplacian, k)
    norms = np.linalg.norm(vectors, axis=-1, keepdims=True)
    return np.divide(vectors, norms, out=np.zeros_like(vectors),
                     where=norms > 0)


def cluster_tokens(a_p, adj, n_clusters, rng, restarts=RESTARTS,
                   iterations=ITERATIONS):
    """Cluster assignments for one (N, N) or a batch of attention blocks"""
    a = graph.as_array(a_p)
    single = a.ndim == 2
    a = a.reshape(-1, *a.shape[-2:])
    n = adj.n
    if not 1 <= n_clusters <= n:
        raise ValueError(f"n_clusters must be in [1, {n}], got {n_clusters}")
    if n_clusters == n:
        result = [ClusterAssignment.identity(n) for _ in a]
        return result[0] if single else result

    s_prime = graph.edge_softmax(graph.symmetrize_attention(a, adj), adj)
    graph.check_connected(graph.affinity_weights(s_prime))
    embedding = spectral_embedding(graph.normalized_laplacian(s_prime),
                                   n_clusters)
    result = []
    for rows in embedding:
        labels, _ = kmeans(rows, n_clusters, rng, restarts,
                           iterations)
        result.append(ClusterAssignment(labels, n_clusters))
    logger.debug("pooled %d graphs of %d tokens into %d clusters",
                 len(result), n, n_clusters)
    return result[0] if single else result


def _flat_index(assignments, device):
    """Cluster id of every token once the batch is laid end to end"""
    n_clusters = assignments[0].n_clusters
    index = np.concatenate([
        a.labels + b * n_clusters for b, a in enumerate(assignments)
    ])
    sizes = np.concatenate([a.sizes for a in assignments])
    return (torch.as_tensor(index, device=device),
            torch.as_tensor(sizes, device=device))


def _copy_back(grad_pooled, index, sizes, mode):
    if mode not in BACKWARD_MODES:
        raise ValueError(f"mode must be one of {BACKWARD_MODES}")
    grad = grad_pooled.reshape(-1, grad_pooled.shape[-1])
    if mode == "adjoint":
        grad = grad / sizes.to(grad.dtype)[:, None]
    return grad[index]


class ClusterAverage(torch.autograd.Function):

    @staticmethod
    def forward(ctx, tokens, index, sizes, n_clusters, mode):
        batch, n, dim = tokens.shape
        flat = tokens.reshape(batch * n, dim)
        sums = flat.new_zeros(batch * n_clusters, dim).index_add_(
            0, index, flat
        )
        ctx.save_for_backward(index, sizes)
        ctx.mode = mode
        ctx.token_shape = tokens.shape
        pooled = sums / sizes.to(sums.dtype)[:, None]
        return pooled.reshape(batch, n_clusters, dim)

    @staticmethod
    def backward(ctx, grad_pooled):
        index, sizes = ctx.saved_tensors
        grad = _copy_back(grad_pooled, index, sizes, ctx.mode)
        return grad.reshape(ctx.token_shape), None, None, None, None


def average_pool(tokens, assignments, mode="copy"):
    """Mean of the tokens in each cluster.

    ``tokens`` is (N, D) with one assignment or (B, N, D) with a list.
    """
    if mode not in BACKWARD_MODES:
        raise ValueError(f"mode must be one of {BACKWARD_MODES}")
    single = tokens.dim() == 2
    if single:
        tokens, assignments = tokens.unsqueeze(0), [assignments]
    if len(assignments) != tokens.shape[0]:
        raise ValueError("Need one assignment per batch item")
    for a in assignments:
        if a.n_tokens != tokens.shape[1]:
            raise ValueError(
                f"Assignment covers {a.n_tokens} tokens, got "
                f"{tokens.shape[1]}"
            )
        if a.n_clusters != assignments[0].n_clusters:
            raise ValueError("Batch assignments differ in cluster count")
    index, sizes = _flat_index(assignments, tokens.device)
    pooled = ClusterAverage.apply(
        tokens, index, sizes, assignments[0].n_clusters, mode
    )
    return pooled[0] if single else pooled


def pool_backward(grad_pooled, assignment, mode="copy"):
    """Token gradients (N, D) from cluster gradients (N', D)"""
    if grad_pooled.shape[0] != assignment.n_clusters:
        raise ValueError(
            f"Gradient has {grad_pooled.shape[0]} rows for "
            f"{assignment.n_clusters} clusters"
        )
    index, sizes = _flat_index([assignment], grad_pooled.device)
    return _copy_back(grad_pooled, index, sizes, mode)


def spectral_pool(tokens, a_p, adj, n_clusters, rng, mode="copy",
                  restarts=RESTARTS, iterations=ITERATIONS):
    """Pool (N, D) or (B, N, D) tokens; returns (pooled, assignment(s))"""
    assignments = cluster_tokens(a_p, adj, n_clusters, rng, restarts,
                                 iterations)
    return average_pool(tokens, assignments, mode), assignments


def compose_assignments(first, second):
    """Map original tokens through two consecutive poolings"""
    if second.n_tokens != first.n_clusters:
        raise ValueError(
            f"Second pooling covers {second.n_tokens} tokens, first made "
            f"{first.n_clusters} clusters"
        )
    return ClusterAssignment(second.labels[first.labels], second.n_clusters)


def dump_assignment(path, assignment):
    lines = [f"{ASSIGNMENT_MAGIC} {assignment.n_tokens} "
             f"{assignment.n_clusters}"]
    lines += [str(label) for label in assignment.labels]
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def load_assignment(path):
    with open(path) as f:
        lines = f.read().splitlines()
    if not lines or not lines[0].startswith(ASSIGNMENT_MAGIC):
        raise ValueError(f"{path}: missing assignment header")
    try:
        n_tokens, n_clusters = map(int, lines[0][len(ASSIGNMENT_MAGIC):]
                                   .split())
        labels = [int(line) for line in lines[1:] if line.strip()]
    except ValueError:
        raise ValueError(f"{path}: malformed assignment file")
    if len(labels) != n_tokens:
        raise ValueError(
            f"{path}: header promises {n_tokens} labels, found {len(labels)}"
        )
    return ClusterAssignment(np.array(labels), n_clusters)
