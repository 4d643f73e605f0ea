import numpy as np
import pytest
import scipy.sparse as sp

from curkit.itercur import StoppingConfig, iterative_cur
from curkit.matcore import CurFactors
from curkit.sketch import (
    downdate_col_residual,
    gaussian_embedding,
    make_sketch,
    relative_sketch_error,
    row_residual,
    sketch_rows,
)


@pytest.mark.parametrize("b,c", [(1, 1), (2, 2), (5, 5), (9, 9), (10, 11), (20, 22), (50, 55), (100, 110), (250, 275)])
def test_sketch_rows_floor(b, c):
    assert sketch_rows(b) == c


def test_embedding_reproducible_and_prefix_stable():
    G1 = gaussian_embedding(42, 5, 30)
    G2 = gaussian_embedding(42, 5, 30)
    assert np.array_equal(G1, G2)
    # entries depend on (seed, row, col) only
    assert np.array_equal(gaussian_embedding(42, 3, 30), G1[:3])
    assert not np.array_equal(gaussian_embedding(43, 5, 30), G1)


def test_zero_matrix():
    st = make_sketch(7, 2, np.zeros((5, 5)))
    assert st.ga_norm == 0.0
    assert not np.any(st.GA)


def test_identity_copies_embedding():
    st = make_sketch(3, 2, np.eye(4))
    assert st.c == 2
    assert np.array_equal(st.GA, st.G)
    assert np.array_equal(st.S_col, st.GA)


def test_seed_determinism():
    A = np.random.default_rng(0).standard_normal((12, 9))
    a = make_sketch(42, 4, A)
    b = make_sketch(42, 4, A)
    assert np.array_equal(a.S_col, b.S_col)


def test_block_exceeds_rows():
    with pytest.raises(ValueError, match="block exceeds row count"):
        make_sketch(0, 6, np.ones((5, 5)))


def test_sparse_sketch_matches_dense():
    S = sp.random(40, 30, density=0.2, format="csr", random_state=np.random.default_rng(1))
    a = make_sketch(5, 6, S)
    b = make_sketch(5, 6, S.toarray())
    assert np.linalg.norm(a.GA - b.GA) <= 1e-13 * np.linalg.norm(b.GA)


def test_downdate_empty():
    A = np.random.default_rng(2).standard_normal((10, 8))
    st = make_sketch(1, 3, A)
    S, rho = downdate_col_residual(st, CurFactors.empty(A))
    assert rho == 1.0
    assert np.array_equal(S, st.GA)


def test_rank_one_single_iteration():
    rng = np.random.default_rng(3)
    A = np.outer(rng.standard_normal(30), rng.standard_normal(20))
    st = make_sketch(0, 1, A)
    j = int(np.argmax(np.abs(st.GA[0])))
    i = int(np.argmax(np.abs(A[:, j])))
    _, rho = downdate_col_residual(st, CurFactors.from_indices(A, [i], [j]))
    assert rho <= 1e-12


def test_downdate_matches_fresh_sketch():
    rng = np.random.default_rng(4)
    A = rng.standard_normal((40, 5)) @ rng.standard_normal((5, 30))
    st = make_sketch(9, 5, A)
    cur = CurFactors.from_indices(A, [0, 3, 7, 11, 20], [1, 4, 9, 15, 22])
    S, rho = downdate_col_residual(st, cur)
    fresh = st.G @ (A - cur.to_dense())
    # relative to ||GA||: S is ~roundoff for an exact rank-5 cross approximation
    assert np.linalg.norm(S - fresh) <= 1e-12 * st.ga_norm
    assert rho == pytest.approx(relative_sketch_error(st.G, A, cur), rel=1e-12, abs=1e-13)


def test_recycled_sketch_identity_over_seeds():
    rng = np.random.default_rng(5)
    for seed in range(20):
        m, n = rng.integers(30, 101, size=2)
        A = rng.standard_normal((m, n)) * np.exp(-np.arange(n) / 10.0)

        def check(k, cur, state):
            fresh = state.G @ (A - cur.to_dense())
            assert np.linalg.norm(state.S_col - fresh) <= 1e-11 * np.linalg.norm(fresh) + 1e-13 * state.ga_norm
            sel = state.S_col[:, cur.col_indices]
            assert np.max(np.abs(sel)) <= 1e-10 * state.ga_norm

        iterative_cur(A, StoppingConfig(1e-6, 5, max_rank=25), seed=seed, callback=check)


def test_row_residual_empty_is_exact():
    A = np.random.default_rng(6).standard_normal((7, 6))
    assert np.array_equal(row_residual(A, CurFactors.empty(A), [2, 4]), A[:, [2, 4]])


def test_row_residual_orthogonal_columns():
    A = np.eye(3)
    cur = CurFactors.from_indices(A, [0], [0])
    np.testing.assert_allclose(row_residual(A, cur, [1]), [[0.0], [1.0], [0.0]], atol=1e-16)


def test_row_residual_matches_full_residual():
    rng = np.random.default_rng(7)
    A = rng.standard_normal((20, 20))
    cur = CurFactors.from_indices(A, [1, 5, 9, 13], [0, 2, 4, 6])
    J_new = [10, 17]
    full = A - cur.to_dense()
    got = row_residual(A, cur, J_new)
    assert np.linalg.norm(got - full[:, J_new]) <= 1e-12 * np.linalg.norm(A[:, J_new])
    # zero-block property on previously selected rows
    assert np.max(np.abs(got[cur.row_indices])) <= 1e-10 * np.linalg.norm(A[:, J_new])


def test_estimator_concentration():
    rng = np.random.default_rng(8)
    n = 200
    A = rng.standard_normal((n, 20)) @ rng.standard_normal((20, n))
    A += 1e-6 * rng.standard_normal((n, n))
    normA = np.linalg.norm(A)
    c = 110
    ratios = [np.linalg.norm(gaussian_embedding(s, c, n) @ A) / (np.sqrt(c) * normA) for s in range(500)]
    assert 0.9 <= np.median(ratios) <= 1.1
