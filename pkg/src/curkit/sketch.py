"""Gaussian embedding and the recycled sketched residual.

The embedding ``G`` is drawn once per run and ``G @ A`` is cached.  Every
later column residual ``G (A - C U R)`` is formed from the cached product:
``G C`` is just ``GA[:, J]``, so ``A`` is never multiplied by ``G`` again.

``G`` has unit-variance entries.  The stopping quantity is the ratio
``||G S|| / ||G A||`` so the ``1/c`` variance scaling cancels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .matcore import CurFactors, MatrixHandle, as_handle, gather_cols, matmul

__all__ = [
    "SketchState",
    "downdate_col_residual",
    "gaussian_embedding",
    "make_sketch",
    "min_sketch_rows",
    "relative_sketch_error",
    "row_residual",
    "sketch_rows",
]


def sketch_rows(b: int) -> int:
    """Number of sketch rows used for block size ``b``: ``floor(1.1 b)``."""
    # integer arithmetic avoids 1.1*b landing just below an integer
    return (11 * b) // 10


def gaussian_embedding(seed: int, rows: int, cols: int) -> np.ndarray:
    """Standard normal ``rows x cols`` matrix.

    Row ``i`` comes from a Philox stream keyed by ``(seed, i)``, so an entry
    depends only on ``(seed, row, col)`` and not on how many rows are drawn.
    """
    seed = int(seed) & 0xFFFFFFFFFFFFFFFF
    G = np.empty((rows, cols), dtype=np.float64)
    for i in range(rows):
        G[i] = np.random.Generator(np.random.Philox(key=[seed, i])).standard_normal(cols)
    return G


@dataclass
class SketchState:
    G: np.ndarray
    GA: np.ndarray
    S_col: np.ndarray
    ga_norm: float
    seed: int
    c: int
    b: int
    rho: float = 1.0


def make_sketch(seed: int, b: int, A) -> SketchState:
    A = as_handle(A)
    if b < 1:
        raise ValueError(f"block size must be >= 1, got {b}")
    if A.rows == 0 or A.cols == 0:
        raise ValueError("cannot sketch an empty matrix")
    if b > A.rows:
        raise ValueError(f"block exceeds row count ({b} > {A.rows})")
    c = sketch_rows(b)
    G = gaussian_embedding(seed, c, A.rows)
    # G @ A computed as (A.T @ G.T).T so sparse A stays on its fast path
    GA = np.ascontiguousarray(matmul(A.values.T, G.T).values.T)
    ga_norm = float(np.linalg.norm(GA))
    return SketchState(G, GA, GA.copy(), ga_norm, int(seed), c, b, 1.0 if ga_norm > 0 else 0.0)


def downdate_col_residual(state: SketchState, cur: CurFactors):
    """Recompute ``S_col = GA - GA[:, J] U R`` and the ratio ``rho``.

    Updates ``state`` in place and returns ``(S_col, rho)``.
    """
    if cur.is_empty():
        state.S_col = state.GA.copy()
    else:
        GCU = cur.core.apply_right(state.GA[:, cur.col_indices])
        state.S_col = state.GA - matmul(GCU, cur.R).values
    state.rho = float(np.linalg.norm(state.S_col)) / state.ga_norm if state.ga_norm > 0 else 0.0
    return state.S_col, state.rho


def row_residual(A, cur: CurFactors, J_new) -> np.ndarray:
    """Dense ``A[:, J_new] - C U R[:, J_new]``."""
    A = as_handle(A)
    J_new = np.asarray(J_new, dtype=np.intp)
    block = gather_cols(A, J_new).to_dense().copy()
    if cur.is_empty():
        return block
    return block - matmul(cur.C, cur.core_times_rows(J_new)).values


def relative_sketch_error(G: np.ndarray, A, cur: CurFactors) -> float:
    """``||G (A - C U R)|| / ||G A||`` recomputed from scratch (test oracle)."""
    A = as_handle(A)
    GA = matmul(MatrixHandle(G), A).values
    denom = np.linalg.norm(GA)
    if cur.is_empty():
        return 1.0 if denom > 0 else 0.0
    GS = GA - matmul(matmul(G, cur.C), cur.core_times_rows()).values
    return float(np.linalg.norm(GS) / denom) if denom > 0 else 0.0


def min_sketch_rows(alpha: float) -> int:
    """Smallest ``c`` with ``c > -4 ln(alpha)``."""
    return math.floor(-4.0 * math.log(alpha)) + 1
