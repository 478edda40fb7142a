"""
Dense symmetric eigensolver.

Cyclic Jacobi with round-robin (parallel) ordering: each sweep is split into
rounds of disjoint index pairs, so one round applies n/2 plane rotations at
once and a whole batch of matrices is processed together.
"""
from functools import lru_cache
import logging

import numpy as np

from core.exceptions import ConvergenceError


logger = logging.getLogger(__name__)

SYMMETRY_ATOL = 1e-9
RESIDUAL_RTOL = 1e-6
OFF_DIAGONAL_RTOL = 1e-12
MAX_SWEEPS = 60


@lru_cache(maxsize=None)
def _rotation_rounds(n):
    """Index pairs for one sweep, grouped into rounds of disjoint pairs"""
    m = n + (n % 2)
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        pairs = [
            (min(players[i], players[m - 1 - i]),
             max(players[i], players[m - 1 - i]))
            for i in range(m // 2)
        ]
        # the padding index of an odd n sits its round out
        pairs = [(p, q) for p, q in pairs if q < n]
        if pairs:
            p, q = zip(*pairs)
            rounds.append((np.array(p), np.array(q)))
        players = [players[0], players[-1]] + players[1:-1]
    return tuple(rounds)


def as_matrix_batch(m):
    a = np.asarray(m, dtype=np.float64)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise ValueError(f"Expected square matrices, got shape {a.shape}")
    if not np.isfinite(a).all():
        raise ValueError("Matrix has non-finite entries")
    return a


def check_symmetric(m, atol=SYMMETRY_ATOL):
    a = as_matrix_batch(m)
    scale = max(1.0, float(np.abs(a).max(initial=0.0)))
    gap = float(np.abs(a - np.swapaxes(a, -1, -2)).max(initial=0.0))
    if gap > atol * scale:
        raise ValueError(
            f"Matrix is not symmetric (max |M - M^T| = {gap:.3e})"
        )
    return a


def eig_residual(m, eigenvalues, eigenvectors):
    """max_j ||M u_j - lambda_j u_j||_inf / ||M||_inf over a batch"""
    a = np.asarray(m, dtype=np.float64)
    mu = a @ eigenvectors
    lu = eigenvectors * eigenvalues[..., None, :]
    norm = np.abs(a).sum(axis=-1).max(axis=-1)
    norm = np.where(norm > 0, norm, 1.0)
    err = np.abs(mu - lu).max(axis=(-2, -1))
    return float((err / norm).max(initial=0.0))


def _off_diagonal_norm(a):
    off = a.copy()
    diag = np.arange(a.shape[-1])
    off[:, diag, diag] = 0.0
    return np.sqrt((off * off).sum(axis=(1, 2)))


def jacobi_eigh(m, max_sweeps=MAX_SWEEPS):
    """Full eigendecomposition of a batch of symmetric matrices.

    Returns unsorted eigenvalues (..., n) and eigenvectors (..., n, n) as
    columns.
    """
    a = check_symmetric(m)
    batch_shape, n = a.shape[:-2], a.shape[-1]
    a = a.reshape(-1, n, n)
    a = 0.5 * (a + np.swapaxes(a, 1, 2))
    v = np.broadcast_to(np.eye(n), a.shape).copy()
    scale = np.sqrt((a * a).sum(axis=(1, 2)))
    threshold = OFF_DIAGONAL_RTOL * scale

    converged = n < 2
    for sweep in range(max_sweeps):
        off = _off_diagonal_norm(a)
        if np.all(off <= threshold):
            converged = True
            break
        for p, q in _rotation_rounds(n):
            app = a[:, p, p]
            aqq = a[:, q, q]
            apq = a[:, p, q]
            rotate = apq != 0.0
            theta = np.divide(
                aqq - app, 2.0 * apq,
                out=np.zeros_like(apq), where=rotate,
            )
            sign = np.where(theta >= 0.0, 1.0, -1.0)
            t = sign / (np.abs(theta) + np.hypot(theta, 1.0))
            t = np.where(rotate, t, 0.0)
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c

            rows_p, rows_q = a[:, p, :], a[:, q, :]
            a[:, p, :] = c[..., None] * rows_p - s[..., None] * rows_q
            a[:, q, :] = s[..., None] * rows_p + c[..., None] * rows_q
            cols_p, cols_q = a[:, :, p], a[:, :, q]
            a[:, :, p] = cols_p * c[:, None, :] - cols_q * s[:, None, :]
            a[:, :, q] = cols_p * s[:, None, :] + cols_q * c[:, None, :]
            a[:, p, q] = 0.0
            a[:, q, p] = 0.0

            vec_p, vec_q = v[:, :, p], v[:, :, q]
            v[:, :, p] = vec_p * c[:, None, :] - vec_q * s[:, None, :]
            v[:, :, q] = vec_p * s[:, None, :] + vec_q * c[:, None, :]
    else:
        converged = bool(np.all(_off_diagonal_norm(a) <= threshold))

    w = np.einsum("bii->bi", a).copy()
    if not converged:
        residual = eig_residual(m, w.reshape(*batch_shape, n),
                                v.reshape(*batch_shape, n, n))
        if residual > RESIDUAL_RTOL:
            raise ConvergenceError(
                f"Jacobi did not converge in {max_sweeps} sweeps", residual
            )
        logger.warning(
            "Jacobi hit the sweep cap; residual %.3e is acceptable", residual
        )
    return w.reshape(*batch_shape, n), v.reshape(*batch_shape, n, n)


def symmetric_eig(m, k):
    """The k smallest eigenpairs of symmetric m (batched over leading axes).

    Eigenvalues come back ascending; eigenvector columns are orthonormal and
    signed so that each column's largest-magnitude entry is positive.
    """
    a = as_matrix_batch(m)
    n = a.shape[-1]
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    w, v = jacobi_eigh(a)

    order = np.argsort(w, axis=-1, kind="stable")[..., :k]
    w = np.take_along_axis(w, order, axis=-1)
    v = np.take_along_axis(v, order[..., None, :], axis=-1)

    pivot = np.argmax(np.abs(v), axis=-2)[..., None, :]
    signs = np.sign(np.take_along_axis(v, pivot, axis=-2))
    signs[signs == 0] = 1.0
    return w, v * signs
