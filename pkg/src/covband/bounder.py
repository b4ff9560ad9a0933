"""Receiver-side conservative bound from the buffer and the error bounds.

Given elementwise bounds ``D >= 0`` on the buffer error, the trace-minimal
diagonally dominant correction is the diagonal matrix of the row sums of
``D``.  Adding it to the buffer yields a matrix that dominates every
covariance consistent with ``D`` in the positive-semidefinite order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .symmat import SymMatrix

__all__ = ["BoundResult", "bound", "error_bound", "in_feasible_set"]


@dataclass(frozen=True)
class BoundResult:
    p_hat: SymMatrix
    s_star: np.ndarray  # diagonal of the optimal correction


def _check_delta(buf: SymMatrix, delta_hat: SymMatrix) -> None:
    if buf.n != delta_hat.n:
        raise ValueError(f"dimension mismatch: {buf.n} vs {delta_hat.n}")
    if np.any(delta_hat.data < 0):
        raise ValueError("error bounds must be nonnegative")


def bound(buf_k: SymMatrix, delta_hat: SymMatrix) -> BoundResult:
    """``buf_k + diag(row_sums(delta_hat))``."""
    _check_delta(buf_k, delta_hat)
    s_star = delta_hat.row_sums()
    return BoundResult(buf_k.add_diag(s_star), s_star)


def _as_mask(w, n: int) -> np.ndarray:
    a = w.to_dense() if isinstance(w, SymMatrix) else np.asarray(w, dtype=np.float64)
    if a.shape != (n, n):
        raise ValueError(f"mask shape {a.shape} does not match n={n}")
    if not np.all((a == 0) | (a == 1)):
        raise ValueError("mask entries must be 0 or 1")
    return a


def error_bound(w, delta_hat: SymMatrix) -> float:
    """Upper bound on ``||W o (P_hat - P)||_F`` for a 0/1 selection mask ``W``.

    ``W`` may be a :class:`SymMatrix` or any ``n x n`` 0/1 array.
    """
    if np.any(delta_hat.data < 0):
        raise ValueError("error bounds must be nonnegative")
    mask = _as_mask(w, delta_hat.n)
    worst = delta_hat.to_dense()
    worst[np.diag_indices(delta_hat.n)] += delta_hat.row_sums()
    return float(np.linalg.norm(mask * worst))


def in_feasible_set(s: SymMatrix, delta_hat: SymMatrix) -> bool:
    """Whether ``S`` satisfies the finite DD constraints of the bound LP.

    True iff ``S[i,i] >= sum_j D[i,j] + sum_{j != i} |S[i,j]|`` for every row.
    """
    _check_delta(s, delta_hat)
    dense = s.to_dense()
    diag = np.diag(dense).copy()
    off = np.abs(dense).sum(axis=1) - np.abs(diag)
    return bool(np.all(diag >= delta_hat.row_sums() + off))
