"""Matrix storage, exact submatrix gathers, products and the factored CUR core.

A :class:`MatrixHandle` wraps either a dense ``float64`` array or a
``scipy.sparse`` CSR matrix.  Everything downstream (sketching, selection,
the iterative driver) talks to matrices through the helpers in this module so
the dense and sparse code paths stay interchangeable.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from threadpoolctl import threadpool_limits

__all__ = [
    "CurFactors",
    "FactoredPinv",
    "MatrixHandle",
    "SingularCrossBlockError",
    "apply_pinv_left",
    "apply_pinv_right",
    "as_handle",
    "build_pinv",
    "fro_norm",
    "gather_cols",
    "gather_rows",
    "is_deterministic",
    "matmul",
    "set_deterministic",
]

ArrayLike = Union[np.ndarray, sp.spmatrix, sp.sparray, "MatrixHandle"]

# column gathers on a CSR handle before switching to a cached CSC copy
_CSC_CACHE_AFTER = 4

_deterministic_limiter = None


def set_deterministic(flag: bool = True) -> None:
    """Force single-threaded BLAS so repeated runs are bit-reproducible."""
    global _deterministic_limiter
    if flag and _deterministic_limiter is None:
        _deterministic_limiter = threadpool_limits(limits=1)
    elif not flag and _deterministic_limiter is not None:
        _deterministic_limiter.restore_original_limits()
        _deterministic_limiter = None


def is_deterministic() -> bool:
    return _deterministic_limiter is not None


class SingularCrossBlockError(ValueError):
    """Raised when the cross block A(I, J) is numerically zero."""


class MatrixHandle:
    """Dense row-major or CSR matrix of 64-bit floats.

    Parameters
    ----------
    values : ndarray or scipy sparse matrix
        Matrix data. Sparse input of any format is converted to CSR.
    check_finite : bool, optional
        Reject NaN/Inf entries on construction (default True).
    """

    __slots__ = ("values", "_col_gathers", "_csc")

    def __init__(self, values, check_finite: bool = True):
        if isinstance(values, MatrixHandle):
            values = values.values
        if sp.issparse(values):
            mat = sp.csr_matrix(values, dtype=np.float64)
            mat.sort_indices()
            stored = mat.data
        else:
            mat = np.array(values, dtype=np.float64, order="C", copy=True)
            if mat.ndim == 1:
                mat = mat.reshape(-1, 1)
            if mat.ndim != 2:
                raise ValueError(f"expected a 2-d matrix, got ndim={mat.ndim}")
            stored = mat
        if check_finite and not np.all(np.isfinite(stored)):
            raise ValueError("matrix contains non-finite values")
        self.values = mat
        self._col_gathers = 0
        self._csc = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.values)

    @property
    def nnz(self) -> int:
        if self.is_sparse:
            return int(self.values.nnz)
        return int(np.count_nonzero(self.values))

    def to_dense(self) -> np.ndarray:
        if self.is_sparse:
            return self.values.toarray()
        return self.values

    def _csc_view(self):
        if self._csc is None:
            self._csc = self.values.tocsc()
        return self._csc

    def __repr__(self) -> str:
        kind = "csr" if self.is_sparse else "dense"
        return f"MatrixHandle({self.rows}x{self.cols}, {kind})"


def as_handle(A: ArrayLike) -> MatrixHandle:
    if isinstance(A, MatrixHandle):
        return A
    return MatrixHandle(A)


def _check_indices(idx: Sequence[int], bound: int, axis: str) -> np.ndarray:
    idx = np.asarray(idx, dtype=np.intp).reshape(-1)
    bad = np.flatnonzero((idx < 0) | (idx >= bound))
    if bad.size:
        raise IndexError(f"{axis} index {int(idx[bad[0]])} out of range for size {bound}")
    return idx


def gather_cols(A: ArrayLike, J: Sequence[int]) -> MatrixHandle:
    """Return ``A[:, J]`` exactly. Sparse input gives sparse output."""
    A = as_handle(A)
    J = _check_indices(J, A.cols, "column")
    if not A.is_sparse:
        return MatrixHandle(A.values[:, J], check_finite=False)
    A._col_gathers += 1
    if A._col_gathers > _CSC_CACHE_AFTER:
        sub = A._csc_view()[:, J].tocsr()
    else:
        sub = A.values[:, J]
    return MatrixHandle(sub, check_finite=False)


def gather_rows(A: ArrayLike, I: Sequence[int]) -> MatrixHandle:
    """Return ``A[I, :]`` exactly. Sparse input gives sparse output."""
    A = as_handle(A)
    I = _check_indices(I, A.rows, "row")
    return MatrixHandle(A.values[I, :], check_finite=False)


def matmul(A: ArrayLike, B: ArrayLike) -> MatrixHandle:
    """Dense product of any combination of dense and CSR operands."""
    A = as_handle(A)
    B = as_handle(B)
    if A.cols != B.rows:
        raise ValueError(f"dimension mismatch: {A.shape} @ {B.shape}")
    out = A.values @ B.values
    if sp.issparse(out):
        out = out.toarray()
    return MatrixHandle(np.asarray(out), check_finite=False)


def fro_norm(A: ArrayLike) -> float:
    A = as_handle(A)
    data = A.values.data if A.is_sparse else A.values
    return float(np.linalg.norm(data.ravel()))


@dataclass
class FactoredPinv:
    """Pseudoinverse of a cross block kept as a pivoted QR factorization.

    With ``X[:, perm] = Q @ T @ Z.T`` (``T`` triangular, ``rank`` x ``rank``)
    the pseudoinverse is ``P @ Z @ inv(T) @ Q.T``.  When ``X`` has full
    numerical rank ``Z`` is the identity and is not stored.
    """

    Q: np.ndarray
    T: np.ndarray
    perm: np.ndarray
    Z: Optional[np.ndarray]
    lower: bool
    rank: int
    tol: float
    shape: tuple[int, int]

    def apply_left(self, M: np.ndarray) -> np.ndarray:
        """``X^+ @ M`` for a dense ``M`` with ``shape[0]`` rows."""
        M = np.asarray(M, dtype=np.float64)
        y = sla.solve_triangular(self.T, self.Q.T @ M, lower=self.lower, check_finite=False)
        if self.Z is not None:
            y = self.Z @ y
        out = np.empty((self.shape[1],) + M.shape[1:], dtype=np.float64)
        out[self.perm] = y
        return out

    def apply_right(self, M: np.ndarray) -> np.ndarray:
        """``M @ X^+`` for a dense ``M`` with ``shape[1]`` columns."""
        M = np.asarray(M, dtype=np.float64)
        y = M[:, self.perm]
        if self.Z is not None:
            y = y @ self.Z
        # y @ inv(T) == solve(T.T, y.T).T
        y = sla.solve_triangular(self.T, y.T, trans="T", lower=self.lower, check_finite=False).T
        return y @ self.Q.T

    def explicit(self) -> np.ndarray:
        """Materialize the pseudoinverse; meant for export only."""
        return self.apply_left(np.eye(self.shape[0]))


def build_pinv(X: ArrayLike, tol: Optional[float] = None, method: str = "qr") -> FactoredPinv:
    """Factor the cross block ``X`` for pseudoinverse application.

    Diagonal entries of the pivoted triangular factor smaller than
    ``tol * |R[0, 0]|`` are discarded; the default ``tol`` is
    ``1e-12 * max(X.shape)``.  Rank-deficient blocks go through a complete
    orthogonal decomposition so the minimum-norm pseudoinverse is applied.
    """
    if method == "lu":
        raise NotImplementedError("LU-based core is reserved but not implemented")
    if method != "qr":
        raise ValueError(f"unknown core method {method!r}")
    X = as_handle(X).to_dense()
    k, n = X.shape
    if k == 0 or n == 0:
        raise SingularCrossBlockError("singular cross block (empty)")
    if tol is None:
        tol = 1e-12 * max(k, n)
    Q, R, perm = sla.qr(X, mode="economic", pivoting=True, check_finite=False)
    diag = np.abs(np.diag(R))
    if diag.size == 0 or diag[0] == 0.0:
        raise SingularCrossBlockError("singular cross block")
    rank = int(np.count_nonzero(diag >= tol * diag[0]))
    Q = Q[:, :rank]
    if rank == n:
        return FactoredPinv(Q, np.triu(R[:rank, :]), perm, None, False, rank, tol, (k, n))
    # R[:rank, :] is wide: R1.T = Z @ S, so X P = Q S.T Z.T with S.T lower
    Z, S = sla.qr(R[:rank, :].T, mode="economic", check_finite=False)
    return FactoredPinv(Q, np.tril(S.T), perm, Z, True, rank, tol, (k, n))


def apply_pinv_left(P: FactoredPinv, M: ArrayLike) -> MatrixHandle:
    M = as_handle(M)
    if M.rows != P.shape[0]:
        raise ValueError(f"shape mismatch: pinv of {P.shape} applied to {M.shape} from the left")
    return MatrixHandle(P.apply_left(M.to_dense()), check_finite=False)


def apply_pinv_right(P: FactoredPinv, M: ArrayLike) -> MatrixHandle:
    M = as_handle(M)
    if M.cols != P.shape[1]:
        raise ValueError(f"shape mismatch: {M.shape} times pinv of {P.shape} from the right")
    return MatrixHandle(P.apply_right(M.to_dense()), check_finite=False)


@dataclass
class CurFactors:
    """Selected indices plus ``C = A[:, J]``, factored ``A[I, J]^+`` and ``R = A[I, :]``."""

    row_indices: np.ndarray
    col_indices: np.ndarray
    C: MatrixHandle
    core: Optional[FactoredPinv]
    R: MatrixHandle
    shape: tuple[int, int] = field(default=(0, 0))

    @classmethod
    def empty(cls, A: ArrayLike) -> "CurFactors":
        A = as_handle(A)
        none = np.zeros(0, dtype=np.intp)
        return cls(
            none,
            none.copy(),
            gather_cols(A, none),
            None,
            gather_rows(A, none),
            A.shape,
        )

    @classmethod
    def from_indices(cls, A: ArrayLike, I: Sequence[int], J: Sequence[int], tol=None) -> "CurFactors":
        A = as_handle(A)
        I = np.asarray(I, dtype=np.intp)
        J = np.asarray(J, dtype=np.intp)
        if len(I) != len(J):
            raise ValueError(f"cross block must be square, got {len(I)} rows and {len(J)} columns")
        if len(set(I.tolist())) != len(I) or len(set(J.tolist())) != len(J):
            raise ValueError("row and column indices must be distinct")
        if len(I) == 0:
            return cls.empty(A)
        C = gather_cols(A, J)
        R = gather_rows(A, I)
        core = build_pinv(gather_cols(R, J), tol=tol)
        return cls(I, J, C, core, R, A.shape)

    @property
    def rank(self) -> int:
        return len(self.col_indices)

    def is_empty(self) -> bool:
        return self.core is None

    def core_explicit(self) -> np.ndarray:
        if self.core is None:
            return np.zeros((0, 0))
        return self.core.explicit()

    def core_times_rows(self, cols: Optional[Sequence[int]] = None) -> np.ndarray:
        """``U @ R[:, cols]`` (all columns when ``cols`` is None), dense."""
        R = self.R if cols is None else gather_cols(self.R, cols)
        return self.core.apply_left(R.to_dense())

    def to_dense(self) -> np.ndarray:
        """The approximation ``C U R`` as a dense array."""
        m, n = self.shape
        if self.core is None:
            return np.zeros((m, n))
        return matmul(self.C, self.core_times_rows()).values
