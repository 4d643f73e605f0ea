"""Pivot-based index selection on small residual matrices.

Both selectors return indices in pivot order.  Previously selected indices are
hard-masked, ties in pivot magnitude go to the lowest original index, and a
block stops early once the pivot falls below ``pivot_floor`` times the first
pivot of that block.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

__all__ = [
    "Method",
    "SelectionMethod",
    "SelectionResult",
    "lupp_pivots",
    "qrcp_pivots",
    "select_columns",
    "select_rows",
]

_EPS = np.finfo(np.float64).eps


class Method(str, enum.Enum):
    LUPP = "LUPP"
    QRCP = "QRCP"
    OSINSKY = "OSINSKY"


@dataclass(frozen=True)
class SelectionMethod:
    tag: Method = Method.LUPP
    pivot_floor: float = 1e-13

    def __post_init__(self):
        object.__setattr__(self, "tag", Method(self.tag))
        if not 0.0 < self.pivot_floor < 1.0:
            raise ValueError(f"pivot_floor must lie in (0, 1), got {self.pivot_floor}")


LUPP = SelectionMethod(Method.LUPP)
QRCP = SelectionMethod(Method.QRCP)


@dataclass(frozen=True)
class SelectionResult:
    indices: np.ndarray
    truncated: bool
    last_pivot_magnitude: float

    def __len__(self) -> int:
        return len(self.indices)


def _as_method(method) -> SelectionMethod:
    if isinstance(method, SelectionMethod):
        return method
    return SelectionMethod(Method(str(method).upper()))


def _mask(n: int, exclude: Optional[Iterable[int]]) -> np.ndarray:
    active = np.ones(n, dtype=bool)
    if exclude is not None:
        ex = np.asarray(list(exclude) if not isinstance(exclude, np.ndarray) else exclude, dtype=np.intp)
        if ex.size:
            active[ex] = False
    return active


def lupp_pivots(W: np.ndarray, k: int, active: np.ndarray, pivot_floor: float, abs_floor: float):
    """Partially pivoted elimination choosing up to ``k`` pivot rows of ``W``.

    Rows are never physically swapped, so ``np.argmax`` breaks ties toward
    the lowest original row index.  Returns ``(rows, last_pivot, truncated)``.
    """
    W = np.array(W, dtype=np.float64, copy=True)
    active = active.copy()
    steps = min(k, W.shape[1], int(active.sum()))
    chosen: list[int] = []
    first = last = 0.0
    for j in range(steps):
        col = np.abs(W[:, j])
        col[~active] = -1.0
        p = int(np.argmax(col))
        piv = col[p]
        if piv <= abs_floor or (chosen and piv < pivot_floor * first):
            return np.array(chosen, dtype=np.intp), last, True
        if not chosen:
            first = piv
        chosen.append(p)
        last = piv
        active[p] = False
        rest = np.flatnonzero(active)
        if j + 1 < W.shape[1] and rest.size:
            l = W[rest, j] / W[p, j]
            W[np.ix_(rest, np.arange(j + 1, W.shape[1]))] -= np.outer(l, W[p, j + 1 :])
    return np.array(chosen, dtype=np.intp), last, len(chosen) < k


def qrcp_pivots(M: np.ndarray, k: int, active: np.ndarray, pivot_floor: float, abs_floor: float):
    """Greedy column pivoting: repeatedly take the column of ``M`` with the
    largest norm after projecting out the columns already chosen.
    Returns ``(cols, last_pivot, truncated)``."""
    M = np.array(M, dtype=np.float64, copy=True)
    active = active.copy()
    c, n = M.shape
    steps = min(k, c, int(active.sum()))
    chosen: list[int] = []
    first = last = 0.0
    Q = np.zeros((c, 0))
    norms = np.einsum("ij,ij->j", M, M)
    ref = norms.copy()
    for _ in range(steps):
        cand = np.where(active, norms, -1.0)
        p = int(np.argmax(cand))
        piv = float(np.sqrt(max(cand[p], 0.0)))
        if piv <= abs_floor or (chosen and piv < pivot_floor * first):
            return np.array(chosen, dtype=np.intp), last, True
        if not chosen:
            first = piv
        chosen.append(p)
        last = piv
        active[p] = False
        # two Gram-Schmidt passes keep the basis orthonormal to working precision
        q = M[:, p].copy()
        for _ in range(2):
            q -= Q @ (Q.T @ q)
        q /= np.linalg.norm(q)
        Q = np.column_stack([Q, q])
        M -= np.outer(q, q @ M)
        norms = np.einsum("ij,ij->j", M, M)
        # refresh columns whose norm has collapsed by cancellation
        stale = active & (norms < 1e-8 * ref)
        if np.any(stale):
            block = M[:, stale]
            block -= Q @ (Q.T @ block)
            M[:, stale] = block
            norms[stale] = np.einsum("ij,ij->j", block, block)
            ref[stale] = norms[stale]
    return np.array(chosen, dtype=np.intp), last, len(chosen) < k


def _run(M: np.ndarray, b: int, method, exclude, along_columns: bool) -> SelectionResult:
    method = _as_method(method)
    if method.tag is Method.OSINSKY:
        raise NotImplementedError("Osinsky selection is not implemented")
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2:
        raise ValueError("selection input must be a 2-d array")
    if not np.all(np.isfinite(M)):
        raise ValueError("selection input contains non-finite values")
    if b < 1:
        raise ValueError(f"block size must be >= 1, got {b}")
    n = M.shape[1] if along_columns else M.shape[0]
    active = _mask(n, exclude)
    abs_floor = 1e2 * _EPS * float(np.linalg.norm(M))
    if abs_floor == 0.0:
        return SelectionResult(np.zeros(0, dtype=np.intp), True, 0.0)
    # LUPP eliminates on the candidate axis as rows; QRCP pivots candidates as columns
    if method.tag is Method.LUPP:
        W = M.T if along_columns else M
        idx, last, trunc = lupp_pivots(W, b, active, method.pivot_floor, abs_floor)
    else:
        W = M if along_columns else M.T
        idx, last, trunc = qrcp_pivots(W, b, active, method.pivot_floor, abs_floor)
    return SelectionResult(idx, bool(trunc), float(last))


def select_columns(M, b: int, method=LUPP, exclude=None) -> SelectionResult:
    """Choose up to ``b`` columns of the ``c x n`` matrix ``M``.

    LUPP eliminates on ``M.T`` and takes its pivot rows; QRCP pivots the
    columns of ``M`` directly.
    """
    M = np.asarray(M, dtype=np.float64)
    if b > M.shape[0]:
        raise ValueError(f"block size {b} exceeds sketch rows {M.shape[0]}")
    return _run(M, b, method, exclude, along_columns=True)


def select_rows(M, b: int, method=LUPP, exclude=None) -> SelectionResult:
    """Choose up to ``min(b, M.shape[1])`` rows of the ``m x w`` matrix ``M``."""
    return _run(M, b, method, exclude, along_columns=False)
