import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from chaoscert.exceptions import InvalidInputError, RankViolationError
from chaoscert.hilbert import (OperatorMatrix, Truncation, block_decompose, finite_rank_s1_bound,
                               is_psd, schatten_norm, singular_values, trace)

seeds = st.integers(0, 2 ** 32 - 1)
dims = st.integers(2, 10)


def rand_matrix(seed, n):
    return np.random.default_rng(seed).standard_normal((n, n))


def rand_orthogonal(seed, n):
    q, r = np.linalg.qr(np.random.default_rng(seed).standard_normal((n, n)))
    return q * np.sign(np.diag(r))


def test_truncation_rejects_nonpositive():
    with pytest.raises(InvalidInputError):
        Truncation(0, 1)
    with pytest.raises(InvalidInputError):
        Truncation(1, 0)


def test_operator_rejects_nonfinite_and_nonsquare():
    with pytest.raises(InvalidInputError):
        OperatorMatrix(np.array([[np.nan, 0], [0, 1]]))
    with pytest.raises(InvalidInputError):
        OperatorMatrix(np.zeros((2, 3)))
    with pytest.raises(InvalidInputError):
        OperatorMatrix(np.array([[0, 1], [0, 0]]), symmetric=True)


def test_schatten_diag():
    A = OperatorMatrix.diag([3, -4])
    assert schatten_norm(A, 1) == pytest.approx(7)
    assert schatten_norm(A, 2) == pytest.approx(5)
    assert schatten_norm(A, math.inf) == pytest.approx(4)
    with pytest.raises(InvalidInputError):
        schatten_norm(A, 0.5)
    with pytest.raises(InvalidInputError):
        schatten_norm(np.array([[np.inf]]), 1)


def test_schatten_one_against_sqrt_ata(rng):
    A = rng.standard_normal((6, 6))
    w, V = np.linalg.eigh(A.T @ A)
    oracle = np.trace(V @ np.diag(np.sqrt(np.maximum(w, 0))) @ V.T)
    assert abs(schatten_norm(A, 1) - oracle) < 1e-9


def test_trace_examples():
    assert trace(OperatorMatrix.identity(5)) == 5
    assert trace(OperatorMatrix.diag([3, -4])) == -1
    assert trace(OperatorMatrix.rank_one([1.0, 0.0])) == 1


def test_block_decompose_edges(rng):
    A = rng.standard_normal((4, 4))
    pp, qp, pq, qq = block_decompose(A, 4)
    assert np.array_equal(pp.entries, A) and not qp.entries.any() and not pq.entries.any() \
        and not qq.entries.any()
    pp, qp, pq, qq = block_decompose(A, 0)
    assert np.array_equal(qq.entries, A) and not pp.entries.any()
    pieces = block_decompose(A, 2)
    assert np.array_equal(sum(p.entries for p in pieces), A)
    assert schatten_norm(A, 1) <= sum(schatten_norm(p, 1) for p in pieces) + 1e-12
    with pytest.raises(InvalidInputError):
        block_decompose(A, 5)


def test_finite_rank_bound(rng):
    u = rng.standard_normal(5)
    u /= np.linalg.norm(u)
    A = OperatorMatrix.rank_one(u)
    assert finite_rank_s1_bound(A, 1) == pytest.approx(1.0)
    assert schatten_norm(A, 1) == pytest.approx(1.0)
    assert finite_rank_s1_bound(np.diag([1.0, 1, 0, 0]), 2) == pytest.approx(2.0)
    B = rng.standard_normal((8, 3)) @ rng.standard_normal((3, 8))
    s = np.linalg.svd(B, compute_uv=False)
    assert finite_rank_s1_bound(B, 3) >= s.sum()
    with pytest.raises(RankViolationError):
        finite_rank_s1_bound(B, 2)


def test_json_roundtrip(rng):
    A = OperatorMatrix(rng.standard_normal((3, 3)))
    back = OperatorMatrix.loads(A.dumps())
    assert np.array_equal(back.entries, A.entries)
    assert json.loads(A.dumps())["dim"] == 3
    with pytest.raises(InvalidInputError):
        OperatorMatrix.from_json({"dim": 2, "entries": [1, 2, 3]})


def test_singular_values_of_near_rank_deficient_projection():
    P = np.diag([1.0, 1e-9, 0.0])
    s = singular_values(P)
    assert s[1] == pytest.approx(1e-9, rel=1e-6)


@given(seeds, dims)
def test_norm_chain(seed, n):
    A = rand_matrix(seed, n)
    assert schatten_norm(A, math.inf) <= schatten_norm(A, 2) + 1e-12
    assert schatten_norm(A, 2) <= schatten_norm(A, 1) + 1e-12


def test_norm_chain_exhaustive():
    for n in range(2, 11):
        for seed in range(100):
            A = rand_matrix(1000 * n + seed, n)
            s_inf, s2, s1 = (schatten_norm(A, p) for p in (math.inf, 2, 1))
            assert s_inf <= s2 + 1e-12 and s2 <= s1 + 1e-12


@given(seeds, dims, st.sampled_from([1.0, 1.5, 2.0, 3.0, math.inf]))
def test_adjoint_and_unitary_invariance(seed, n, p):
    A = rand_matrix(seed, n)
    U = rand_orthogonal(seed + 1, n)
    v = schatten_norm(A, p)
    assert abs(schatten_norm(A.T, p) - v) <= 1e-9 * max(1, v)
    assert abs(schatten_norm(U @ A @ U.T, p) - v) <= 1e-9 * max(1, v)


@given(seeds, dims, st.integers(0, 10))
def test_block_pieces_sum_exactly(seed, n, m):
    A = rand_matrix(seed, n)
    m = min(m, n)
    assert np.array_equal(sum(p.entries for p in block_decompose(A, m)), A)


@given(seeds, dims)
def test_psd_trace_equals_s1(seed, n):
    B = rand_matrix(seed, n)
    A = B @ B.T
    assert is_psd(A)
    assert abs(schatten_norm(A, 1) - trace(A)) <= 1e-10 * max(1, trace(A))
