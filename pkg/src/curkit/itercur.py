"""Rank-adaptive CUR driver on a single recycled sketch.

Each iteration picks a block of columns by pivoting on the sketched residual
``G (A - C U R)``, picks the same number of rows by pivoting on the residual
restricted to those new columns, refactors the cross block ``A[I, J]`` and
downdates the sketched residual from the cached ``G A``.  The run stops once
``||G (A - C U R)|| / ||G A||`` reaches the (optionally risk-adjusted)
threshold.
"""

from __future__ import annotations

import enum
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .matcore import CurFactors, SingularCrossBlockError, as_handle, fro_norm, gather_cols, matmul
from .selection import LUPP, SelectionMethod, select_columns, select_rows
from .sketch import SketchState, downdate_col_residual, make_sketch, row_residual, sketch_rows

__all__ = [
    "IterationRecord",
    "RunTrace",
    "Status",
    "StoppingConfig",
    "adjusted_threshold",
    "gratton_tail",
    "iterative_cur",
    "true_relative_error",
]

log = logging.getLogger(__name__)

# sketched residual this small relative to ||GA|| is roundoff; pivots on it are noise
EXHAUSTED_RHO = 1e2 * np.finfo(np.float64).eps


def adjusted_threshold(epsilon: float, delta: float, alpha: float, c: int) -> float:
    """Stopping threshold ``xi * epsilon`` with
    ``xi = (1 + delta) * sqrt(1 - 2 sqrt(-ln(alpha) / c))``.

    Stopping when the sketched relative residual drops below this value keeps
    the probability of ending with a true relative error above
    ``(1 + delta) * epsilon`` under ``alpha``.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if delta < 0:
        raise ValueError(f"delta must be >= 0, got {delta}")
    if c <= -4.0 * math.log(alpha):
        raise ValueError(f"block too small for requested alpha: need c > {-4.0 * math.log(alpha):.3f}, got c = {c}")
    xi = (1.0 + delta) * math.sqrt(1.0 - 2.0 * math.sqrt(-math.log(alpha) / c))
    return xi * epsilon


def gratton_tail(c: int, tau: float) -> float:
    """Upper bound on ``Pr[||G S|| <= ||S|| / tau]`` for ``G`` with
    ``N(0, 1/c)`` entries: ``exp(-c (tau^2 - 1)^2 / (4 tau^4))``."""
    if tau <= 1.0:
        raise ValueError(f"tau must exceed 1, got {tau}")
    if c < 1:
        raise ValueError(f"c must be >= 1, got {c}")
    return math.exp(-c * (tau * tau - 1.0) ** 2 / (4.0 * tau**4))


@dataclass
class StoppingConfig:
    """Stopping and size controls.

    ``epsilon = 0`` is pure rank mode: iterate until ``max_rank``.
    """

    epsilon: float
    b: int
    delta: float = 0.0
    alpha: float = 0.1
    risk_adjust: bool = False
    max_rank: Optional[int] = None
    max_iters: Optional[int] = None

    def __post_init__(self):
        if self.epsilon < 0 or not math.isfinite(self.epsilon):
            raise ValueError(f"epsilon must be finite and >= 0, got {self.epsilon}")
        if self.b < 1:
            raise ValueError(f"block size must be >= 1, got {self.b}")
        if self.delta < 0:
            raise ValueError(f"delta must be >= 0, got {self.delta}")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.risk_adjust and self.c <= -4.0 * math.log(self.alpha):
            raise ValueError(
                f"block too small for requested alpha: sketch rows {self.c} must exceed {-4.0 * math.log(self.alpha):.3f}"
            )
        if self.max_rank is not None and self.max_rank < 0:
            raise ValueError("max_rank must be >= 0")
        if self.max_iters is not None and self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")

    @property
    def c(self) -> int:
        return sketch_rows(self.b)

    def threshold(self) -> float:
        if self.risk_adjust:
            return adjusted_threshold(self.epsilon, self.delta, self.alpha, self.c)
        return self.epsilon


class Status(str, enum.Enum):
    CONVERGED = "Converged"
    MAX_RANK = "MaxRank"
    RESIDUAL_EXHAUSTED = "ResidualExhausted"


@dataclass
class IterationRecord:
    k: int
    rho: float
    n_cols: int
    n_rows: int
    rank: int
    col_truncated: bool
    row_truncated: bool
    t_select_cols: float
    t_row_residual: float
    t_select_rows: float
    t_core: float
    t_downdate: float


@dataclass
class RunTrace:
    threshold: float
    c: int
    b: int
    seed: int
    records: list = field(default_factory=list)
    status: Status = Status.CONVERGED
    notes: list = field(default_factory=list)
    wall_time: float = 0.0

    @property
    def rho(self) -> float:
        return self.records[-1].rho if self.records else 1.0

    @property
    def rhos(self) -> list:
        return [r.rho for r in self.records]

    @property
    def iterations(self) -> int:
        return len(self.records)


def iterative_cur(
    A,
    cfg: StoppingConfig,
    col_method: SelectionMethod = LUPP,
    row_method: SelectionMethod = LUPP,
    seed: int = 0,
    callback: Optional[Callable[[int, CurFactors, SketchState], None]] = None,
):
    """Build a CUR approximation of ``A`` block by block.

    Parameters
    ----------
    A : MatrixHandle, ndarray or sparse matrix
        Nonzero input matrix.
    cfg : StoppingConfig
        Target accuracy, block size and limits.
    col_method, row_method : SelectionMethod
        Pivoting rule for columns (on the sketch) and rows (on the row residual).
    seed : int
        Key for the Gaussian embedding.
    callback : callable, optional
        Called as ``callback(k, factors, sketch_state)`` after every iteration.

    Returns
    -------
    factors : CurFactors
    trace : RunTrace
    """
    A = as_handle(A)
    m, n = A.shape
    full = min(m, n)
    b = cfg.b
    max_rank = full if cfg.max_rank is None else min(cfg.max_rank, full)
    max_iters = math.ceil(full / b) + 1 if cfg.max_iters is None else cfg.max_iters
    threshold = cfg.threshold()

    t_start = time.perf_counter()
    state = make_sketch(seed, b, A)
    if state.ga_norm == 0.0:
        raise ValueError("input matrix is zero (its sketch vanishes)")
    trace = RunTrace(threshold=threshold, c=state.c, b=b, seed=seed)
    cur = CurFactors.empty(A)
    rho = 1.0

    if rho <= threshold:
        trace.notes.append("threshold >= 1: empty factorization returned")

    k = 0
    while True:
        if rho <= threshold:
            trace.status = Status.CONVERGED
            break
        if cur.rank >= max_rank:
            trace.status = Status.MAX_RANK
            break
        if rho <= EXHAUSTED_RHO:
            trace.status = Status.RESIDUAL_EXHAUSTED
            trace.notes.append(f"iteration {k}: sketched residual at roundoff level ({rho:.2e})")
            break
        if k >= max_iters:
            trace.status = Status.MAX_RANK
            trace.notes.append(f"iteration cap {max_iters} reached")
            break
        bk = min(b, max_rank - cur.rank)

        t0 = time.perf_counter()
        cols = select_columns(state.S_col, bk, col_method, exclude=cur.col_indices)
        t1 = time.perf_counter()
        if len(cols) == 0:
            trace.status = Status.RESIDUAL_EXHAUSTED
            trace.notes.append(f"iteration {k}: no admissible column pivot")
            break
        Jk = cols.indices
        S_row = row_residual(A, cur, Jk)
        t2 = time.perf_counter()
        rows = select_rows(S_row, len(Jk), row_method, exclude=cur.row_indices)
        t3 = time.perf_counter()
        if len(rows) == 0:
            trace.status = Status.RESIDUAL_EXHAUSTED
            trace.notes.append(f"iteration {k}: no admissible row pivot")
            break
        # keep the cross block square
        Jk = Jk[: len(rows)]
        I = np.concatenate([cur.row_indices, rows.indices])
        J = np.concatenate([cur.col_indices, Jk])
        try:
            new = CurFactors.from_indices(A, I, J)
        except SingularCrossBlockError as exc:
            trace.status = Status.RESIDUAL_EXHAUSTED
            trace.notes.append(f"iteration {k}: {exc}")
            break
        t4 = time.perf_counter()
        cur = new
        _, rho = downdate_col_residual(state, cur)
        t5 = time.perf_counter()

        trace.records.append(
            IterationRecord(
                k=k,
                rho=rho,
                n_cols=len(Jk),
                n_rows=len(rows),
                rank=cur.rank,
                col_truncated=cols.truncated,
                row_truncated=rows.truncated,
                t_select_cols=t1 - t0,
                t_row_residual=t2 - t1,
                t_select_rows=t3 - t2,
                t_core=t4 - t3,
                t_downdate=t5 - t4,
            )
        )
        log.debug("iteration %d: rank %d, rho %.3e", k, cur.rank, rho)
        if callback is not None:
            callback(k, cur, state)
        k += 1

    trace.wall_time = time.perf_counter() - t_start
    return cur, trace


def true_relative_error(A, cur: CurFactors, panel: int = 256) -> float:
    """Exact ``||A - C U R||_F / ||A||_F``, evaluated in column panels.

    Only ``m x panel`` slabs of the residual are ever held in memory.
    """
    A = as_handle(A)
    norm_a = fro_norm(A)
    if norm_a == 0.0:
        return 0.0
    if cur.is_empty():
        return 1.0
    total = 0.0
    for start in range(0, A.cols, panel):
        idx = np.arange(start, min(start + panel, A.cols))
        slab = gather_cols(A, idx).to_dense() - matmul(cur.C, cur.core_times_rows(idx)).values
        total += float(np.einsum("ij,ij->", slab, slab))
    return math.sqrt(total) / norm_a
