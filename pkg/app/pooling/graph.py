"""
Token graphs for spectral pooling.

The patch grid is an 8-connected graph. Attention between neighbours is
symmetrised, softmax-normalised per row over the neighbours only, and turned
into a symmetric normalised Laplacian. All functions accept a single N x N
matrix or a batch (..., N, N).
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np
import torch

from core.exceptions import DisconnectedGraphError


@dataclass(frozen=True)
class GridAdjacency:
    mask: np.ndarray
    h: Optional[int] = None
    w: Optional[int] = None

    def __post_init__(self):
        mask = np.asarray(self.mask, dtype=bool)
        if mask.ndim != 2 or mask.shape[0] != mask.shape[1]:
            raise ValueError("Adjacency mask must be square")
        if mask.diagonal().any():
            raise ValueError("Adjacency mask must have no self-edges")
        if not np.array_equal(mask, mask.T):
            raise ValueError("Adjacency mask must be symmetric")
        if (self.h is None) != (self.w is None):
            raise ValueError("h and w must be given together")
        if self.h is not None and self.h * self.w != mask.shape[0]:
            raise ValueError(
                f"Grid {self.h}x{self.w} does not hold {mask.shape[0]} tokens"
            )
        object.__setattr__(self, "mask", mask)

    @property
    def n(self):
        return self.mask.shape[0]

    def degree(self):
        return self.mask.sum(axis=1)


def as_array(m):
    if isinstance(m, torch.Tensor):
        return m.detach().cpu().numpy().astype(np.float64)
    return np.asarray(m, dtype=np.float64)


def build_grid_adjacency(h, w):
    """Cells are adjacent iff both coordinates differ by at most one"""
    if h < 1 or w < 1:
        raise ValueError(f"Grid needs h, w >= 1, got {h}x{w}")
    rows, cols = np.divmod(np.arange(h * w), w)
    near_rows = np.abs(rows[:, None] - rows[None, :]) <= 1
    near_cols = np.abs(cols[:, None] - cols[None, :]) <= 1
    mask = near_rows & near_cols
    np.fill_diagonal(mask, False)
    return GridAdjacency(mask, h, w)


def _check_square(a, adj):
    if a.shape[-2:] != (adj.n, adj.n):
        raise ValueError(
            f"Matrix {a.shape[-2:]} does not match {adj.n} graph vertices"
        )


def symmetrize_attention(a_p, adj):
    """S = A o H + A^T o H^T, zero off the adjacency mask"""
    a = as_array(a_p)
    _check_square(a, adj)
    directed = a * adj.mask
    return directed + np.swapaxes(directed, -1, -2)


def edge_softmax(s, adj):
    """Row softmax over neighbours; off-mask entries stay exactly 0"""
    s = as_array(s)
    _check_square(s, adj)
    logits = np.where(adj.mask, s, -np.inf)
    peak = logits.max(axis=-1, keepdims=True)
    peak = np.where(np.isfinite(peak), peak, 0.0)
    e = np.where(adj.mask, np.exp(logits - peak), 0.0)
    total = e.sum(axis=-1, keepdims=True)
    return np.divide(e, total, out=np.zeros_like(e), where=total > 0)


def affinity_weights(s_prime):
    """W = (S' + S'^T) / 2"""
    s_prime = as_array(s_prime)
    return (s_prime + np.swapaxes(s_prime, -1, -2)) / 2


def normalized_laplacian(s_prime):
    """L = I - D^-1/2 W D^-1/2 of the symmetrised affinity"""
    w = affinity_weights(s_prime)
    if (w < 0).any():
        raise ValueError("Affinity weights must be nonnegative")
    degree = w.sum(axis=-1)
    isolated = np.argwhere(degree <= 0)
    if len(isolated):
        raise DisconnectedGraphError(int(isolated[0][-1]))
    inv_sqrt = 1.0 / np.sqrt(degree)
    n = w.shape[-1]
    lap = np.eye(n) - inv_sqrt[..., :, None] * w * inv_sqrt[..., None, :]
    return (lap + np.swapaxes(lap, -1, -2)) / 2


def connected_components(mask):
    """Component id per vertex, numbered by first vertex"""
    mask = np.asarray(mask, dtype=bool)
    n = mask.shape[0]
    reach = mask | np.eye(n, dtype=bool)
    while True:
        grown = (reach.astype(np.int64) @ reach.astype(np.int64)) > 0
        if np.array_equal(grown, reach):
            break
        reach = grown
    # the first reachable vertex names the component
    return np.unique(reach.argmax(axis=1), return_inverse=True)[1]


def check_connected(w):
    """Raise if any graph in the batch has more than one component"""
    w = as_array(w)
    for graph in w.reshape(-1, *w.shape[-2:]):
        labels = connected_components(graph > 0)
        stranded = np.flatnonzero(labels != 0)
        if len(stranded):
            raise DisconnectedGraphError(
                int(stranded[0]), "is not connected to vertex 0"
            )


def coarsen_adjacency(adj, assignment):
    """Clusters are adjacent iff any of their member tokens are"""
    if assignment.n_tokens != adj.n:
        raise ValueError(
            f"Assignment covers {assignment.n_tokens} tokens, graph has "
            f"{adj.n}"
        )
    member = np.zeros((adj.n, assignment.n_clusters), dtype=np.int64)
    member[np.arange(adj.n), assignment.labels] = 1
    mask = (member.T @ adj.mask.astype(np.int64) @ member) > 0
    np.fill_diagonal(mask, False)
    return GridAdjacency(mask)
