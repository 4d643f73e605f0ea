"""Synthetic test matrices and MatrixMarket I/O."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np
import scipy.sparse as sp

from .matcore import MatrixHandle, as_handle

__all__ = [
    "GeneratorSpec",
    "MatrixMarketError",
    "default_pd_decay",
    "generate",
    "parse_generator",
    "read_matrix_market",
    "write_matrix_market",
]

KINDS = ("lowrank", "lowrankpd", "lehmer", "expdecay")


def default_pd_decay(m: int) -> float:
    """Geometric ratio giving ``D[m-1] / D[0] = 1e-12`` over ``m`` entries."""
    if m <= 1:
        return 0.5
    return 10.0 ** (-12.0 / (m - 1))


@dataclass(frozen=True)
class GeneratorSpec:
    """Synthetic matrix description.

    ``kind`` is one of ``lowrank`` (m, n, r), ``lowrankpd`` (m, n, r, decay),
    ``lehmer`` (n) or ``expdecay`` (n, ratio).
    """

    kind: str
    m: int = 0
    n: int = 0
    r: int = 0
    decay: Optional[float] = None
    ratio: float = 0.5
    seed: int = 0

    def __post_init__(self):
        kind = self.kind.lower().replace("-", "").replace("_", "")
        object.__setattr__(self, "kind", kind)
        if kind not in KINDS:
            raise ValueError(f"unknown generator kind {self.kind!r}; expected one of {KINDS}")
        if kind in ("lehmer", "expdecay"):
            if self.m == 0:
                object.__setattr__(self, "m", self.n)
            if self.n < 1 or self.m != self.n:
                raise ValueError(f"{kind} needs a square size n >= 1")
        if self.m < 1 or self.n < 1:
            raise ValueError(f"invalid dimensions {self.m}x{self.n}")
        if kind in ("lowrank", "lowrankpd") and not 0 <= self.r <= min(self.m, self.n):
            raise ValueError(f"rank {self.r} outside [0, {min(self.m, self.n)}]")
        if kind == "lowrankpd" and self.decay is not None and not 0.0 < self.decay < 1.0:
            raise ValueError(f"decay must lie in (0, 1), got {self.decay}")
        if kind == "expdecay" and not 0.0 < self.ratio < 1.0:
            raise ValueError(f"ratio must lie in (0, 1), got {self.ratio}")

    def label(self) -> str:
        if self.kind == "lehmer":
            return f"lehmer{self.n}"
        if self.kind == "expdecay":
            return f"expdecay{self.n}_{self.ratio:g}"
        return f"{self.kind}{self.m}x{self.n}_r{self.r}"


def _lehmer(n: int) -> np.ndarray:
    i = np.arange(1, n + 1, dtype=np.float64)
    return np.minimum.outer(i, i) / np.maximum.outer(i, i)


def generate(spec: GeneratorSpec) -> MatrixHandle:
    rng = np.random.default_rng(spec.seed)
    m, n = spec.m, spec.n
    if spec.kind == "lehmer":
        return MatrixHandle(_lehmer(n))
    if spec.kind == "expdecay":
        U, _ = np.linalg.qr(rng.standard_normal((n, n)))
        V, _ = np.linalg.qr(rng.standard_normal((n, n)))
        s = spec.ratio ** np.arange(n, dtype=np.float64)
        return MatrixHandle((U * s) @ V.T)
    G1 = rng.standard_normal((m, spec.r))
    G2 = rng.standard_normal((n, spec.r))
    A = G1 @ G2.T
    if spec.kind == "lowrankpd":
        beta = spec.decay if spec.decay is not None else default_pd_decay(min(m, n))
        d = beta ** np.arange(min(m, n), dtype=np.float64)
        A[np.diag_indices(min(m, n))] += d
    return MatrixHandle(A)


def parse_generator(text: str, seed: int = 0) -> GeneratorSpec:
    """Parse ``kind:arg,arg,...`` e.g. ``lowrank:1000,1000,100`` or ``lehmer:400``."""
    kind, _, rest = text.partition(":")
    args = [a for a in rest.split(",") if a.strip()] if rest else []
    kind = kind.strip().lower().replace("-", "").replace("_", "")
    try:
        if kind == "lowrank" and len(args) == 3:
            return GeneratorSpec("lowrank", int(args[0]), int(args[1]), int(args[2]), seed=seed)
        if kind == "lowrankpd" and len(args) in (3, 4):
            decay = float(args[3]) if len(args) == 4 else None
            return GeneratorSpec("lowrankpd", int(args[0]), int(args[1]), int(args[2]), decay=decay, seed=seed)
        if kind == "lehmer" and len(args) == 1:
            return GeneratorSpec("lehmer", n=int(args[0]), seed=seed)
        if kind == "expdecay" and len(args) in (1, 2):
            ratio = float(args[1]) if len(args) == 2 else 0.5
            return GeneratorSpec("expdecay", n=int(args[0]), ratio=ratio, seed=seed)
    except ValueError as exc:
        raise ValueError(f"bad generator spec {text!r}: {exc}") from None
    raise ValueError(
        f"bad generator spec {text!r}; expected lowrank:m,n,r | lowrankpd:m,n,r[,decay] | lehmer:n | expdecay:n[,ratio]"
    )


class MatrixMarketError(ValueError):
    def __init__(self, path, lineno: int, msg: str):
        super().__init__(f"{path}:{lineno}: {msg}")
        self.lineno = lineno


_FIELDS = {"real", "double", "integer", "pattern"}
_SYMMETRIES = {"general", "symmetric", "skew-symmetric"}


def read_matrix_market(path: Union[str, Path]) -> MatrixHandle:
    """Read a real MatrixMarket file.

    Coordinate files come back as CSR with symmetric storage expanded;
    array files come back dense.
    """
    path = Path(path)
    with path.open("r") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise MatrixMarketError(path, 1, "empty file")
    head = lines[0].split()
    if len(head) != 5 or head[0].lower() != "%%matrixmarket" or head[1].lower() != "matrix":
        raise MatrixMarketError(path, 1, "malformed header")
    fmt, fld, sym = (h.lower() for h in head[2:])
    if fmt not in ("coordinate", "array"):
        raise MatrixMarketError(path, 1, f"unsupported format {fmt!r}")
    if fld == "complex":
        raise MatrixMarketError(path, 1, "unsupported field 'complex'")
    if fld not in _FIELDS or (fld == "pattern" and fmt == "array"):
        raise MatrixMarketError(path, 1, f"unsupported field {fld!r}")
    if sym not in _SYMMETRIES:
        raise MatrixMarketError(path, 1, f"unsupported symmetry {sym!r}")

    body = ((i + 1, ln.strip()) for i, ln in enumerate(lines) if i > 0)
    body = [(no, ln) for no, ln in body if ln and not ln.startswith("%")]
    if not body:
        raise MatrixMarketError(path, len(lines), "missing size line")
    size_no, size_line = body[0]
    try:
        dims = [int(t) for t in size_line.split()]
    except ValueError:
        raise MatrixMarketError(path, size_no, f"bad size line {size_line!r}") from None
    entries = body[1:]

    if fmt == "array":
        if len(dims) != 2:
            raise MatrixMarketError(path, size_no, "array size line needs 2 integers")
        m, n = dims
        if sym == "general":
            expected = m * n
        elif sym == "symmetric":
            expected = n * (n + 1) // 2
        else:
            expected = n * (n - 1) // 2
        if sym != "general" and m != n:
            raise MatrixMarketError(path, size_no, "symmetric storage needs a square matrix")
        if len(entries) != expected:
            lineno = entries[-1][0] if entries else size_no
            raise MatrixMarketError(path, lineno, f"expected {expected} entries, found {len(entries)}")
        vals = np.empty(expected)
        for k, (no, ln) in enumerate(entries):
            tok = ln.split()
            if len(tok) != 1:
                raise MatrixMarketError(path, no, f"expected one value, got {ln!r}")
            vals[k] = _parse_value(path, no, tok[0])
        A = np.zeros((m, n))
        if sym == "general":
            A[:] = vals.reshape(n, m).T  # column-major
        else:
            k = 0
            start = 0 if sym == "symmetric" else 1
            for j in range(n):
                for i in range(j + start, n):
                    A[i, j] = vals[k]
                    A[j, i] = vals[k] if sym == "symmetric" else -vals[k]
                    k += 1
        return MatrixHandle(A)

    if len(dims) != 3:
        raise MatrixMarketError(path, size_no, "coordinate size line needs 3 integers")
    m, n, nnz = dims
    if len(entries) != nnz:
        lineno = entries[-1][0] if entries else size_no
        raise MatrixMarketError(path, lineno, f"header declares {nnz} entries, found {len(entries)}")
    rows = np.empty(nnz, dtype=np.int64)
    cols = np.empty(nnz, dtype=np.int64)
    vals = np.ones(nnz)
    want = 2 if fld == "pattern" else 3
    for k, (no, ln) in enumerate(entries):
        tok = ln.split()
        if len(tok) != want:
            raise MatrixMarketError(path, no, f"expected {want} fields, got {ln!r}")
        try:
            i, j = int(tok[0]), int(tok[1])
        except ValueError:
            raise MatrixMarketError(path, no, f"bad index in {ln!r}") from None
        if not (1 <= i <= m and 1 <= j <= n):
            raise MatrixMarketError(path, no, f"index ({i}, {j}) outside {m}x{n}")
        rows[k], cols[k] = i - 1, j - 1
        if want == 3:
            vals[k] = _parse_value(path, no, tok[2])
    if sym != "general":
        off = rows != cols
        sign = 1.0 if sym == "symmetric" else -1.0
        rows, cols, vals = (
            np.concatenate([rows, cols[off]]),
            np.concatenate([cols, rows[off]]),
            np.concatenate([vals, sign * vals[off]]),
        )
    A = sp.coo_matrix((vals, (rows, cols)), shape=(m, n)).tocsr()
    A.sum_duplicates()
    return MatrixHandle(A)


def _parse_value(path, lineno: int, tok: str) -> float:
    try:
        v = float(tok)
    except ValueError:
        raise MatrixMarketError(path, lineno, f"bad value {tok!r}") from None
    if not math.isfinite(v):
        raise MatrixMarketError(path, lineno, f"non-finite value {tok!r}")
    return v


def write_matrix_market(path: Union[str, Path], A, comment: str = "") -> None:
    """Write ``A`` as a general real file: coordinate if sparse, array if dense."""
    A = as_handle(A)
    path = Path(path)
    m, n = A.shape
    with path.open("w") as fh:
        if A.is_sparse:
            coo = A.values.tocoo()
            fh.write("%%MatrixMarket matrix coordinate real general\n")
            if comment:
                fh.write(f"% {comment}\n")
            fh.write(f"{m} {n} {coo.nnz}\n")
            for i, j, v in zip(coo.row, coo.col, coo.data):
                fh.write(f"{i + 1} {j + 1} {float(v)!r}\n")
        else:
            fh.write("%%MatrixMarket matrix array real general\n")
            if comment:
                fh.write(f"% {comment}\n")
            fh.write(f"{m} {n}\n")
            for v in A.values.T.ravel():
                fh.write(f"{float(v)!r}\n")
