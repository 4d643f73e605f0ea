"""Reference methods: truncated SVD error, fixed-rank sketched LUPP CUR,
the randomized rangefinder and a dense CUR residual oracle."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .matcore import CurFactors, as_handle, gather_cols, matmul
from .selection import LUPP, select_columns, select_rows
from .sketch import gaussian_embedding

__all__ = [
    "SpectrumSummary",
    "naive_cur_residual",
    "rangefinder_error",
    "slupp_cur",
    "spectrum",
    "truncated_svd_error",
]


@dataclass
class SpectrumSummary:
    singular_values: np.ndarray
    tail: np.ndarray  # tail[r] = sqrt(sum_{i > r} sigma_i^2), r = 0..min(m, n)

    @property
    def fro_norm(self) -> float:
        return float(self.tail[0])

    def tail_energy(self, r: int) -> float:
        if r >= len(self.singular_values):
            return 0.0
        return float(self.tail[r])


def spectrum(A) -> SpectrumSummary:
    X = as_handle(A).to_dense()
    s = np.linalg.svd(X, compute_uv=False)
    # suffix sums from the small end keep the tail accurate
    sq = s[::-1] ** 2
    tail = np.sqrt(np.concatenate([np.cumsum(sq)[::-1], [0.0]]))
    return SpectrumSummary(s, tail)


def truncated_svd_error(A, r: int, relative: bool = False) -> float:
    """Frobenius error of the best rank-``r`` approximation of ``A``."""
    summ = spectrum(A)
    err = summ.tail_energy(r)
    if relative:
        return err / summ.fro_norm if summ.fro_norm > 0 else 0.0
    return err


def slupp_cur(A, r: int, seed: int = 0) -> CurFactors:
    """Fixed-rank CUR: LUPP columns on a fresh sketch, LUPP rows on ``A[:, J]``."""
    A = as_handle(A)
    m, n = A.shape
    if r < 0 or r > min(m, n):
        raise ValueError(f"rank {r} outside [0, {min(m, n)}]")
    if r == 0:
        return CurFactors.empty(A)
    c = math.ceil(1.1 * r - 1e-9)
    G = gaussian_embedding(seed, c, m)
    GA = matmul(A.values.T, G.T).values.T
    J = select_columns(GA, r, LUPP).indices
    I = select_rows(gather_cols(A, J).to_dense(), len(J), LUPP).indices
    return CurFactors.from_indices(A, I, J[: len(I)])


def rangefinder_error(A, b: int, seed: int = 0) -> float:
    """``||A - A X^+ X||_F`` for the sketch ``X = G A`` with ``b`` Gaussian rows."""
    if b < 2:
        raise ValueError(f"rangefinder needs b >= 2, got {b}")
    A = as_handle(A).to_dense()
    G = gaussian_embedding(seed, b, A.shape[0])
    X = G @ A
    if not np.any(X):
        return float(np.linalg.norm(A))
    V = sla.orth(X.T)
    return float(np.linalg.norm(A - (A @ V) @ V.T))


def naive_cur_residual(A, cur: CurFactors) -> np.ndarray:
    """Dense ``A - C U R`` with ``U`` from an SVD-based pseudoinverse."""
    X = as_handle(A).to_dense()
    if cur.is_empty():
        return X.copy()
    I, J = cur.row_indices, cur.col_indices
    U = np.linalg.pinv(X[np.ix_(I, J)])
    return X - X[:, J] @ U @ X[I, :]
