"""Rank-adaptive CUR approximation on a recycled Gaussian sketch."""

from .baselines import naive_cur_residual, rangefinder_error, slupp_cur, spectrum, truncated_svd_error
from .itercur import (
    RunTrace,
    Status,
    StoppingConfig,
    adjusted_threshold,
    gratton_tail,
    iterative_cur,
    true_relative_error,
)
from .matcore import (
    CurFactors,
    FactoredPinv,
    MatrixHandle,
    SingularCrossBlockError,
    apply_pinv_left,
    apply_pinv_right,
    build_pinv,
    fro_norm,
    gather_cols,
    gather_rows,
    matmul,
    set_deterministic,
)
from .selection import LUPP, QRCP, Method, SelectionMethod, SelectionResult, select_columns, select_rows
from .sketch import SketchState, downdate_col_residual, make_sketch, row_residual
from .testmat import GeneratorSpec, generate, read_matrix_market, write_matrix_market

__version__ = "0.1.0"
