import inspect
import json
import math
import re
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from _oracles import c_p, c_pq, c_pqchi, oracle_terms
from chaoscert import certificates as C
from chaoscert.certificates import (TargetSpec, block_diagonal, check_fmt_conditions,
                                    constant_cp, constant_cp_squared, constant_cpq,
                                    constant_cpqchi, constant_cpqchi_exact, fixed_chaos_bound,
                                    flatten_vector_chaos, gamma_terms, gaussian_pair_bound,
                                    layout_permutation, r_terms, sequence_bound, staged_grid,
                                    theorem35_bound)
from chaoscert.chaos import exact_covariance, order_covariances
from chaoscert.corpus import random_component_kernel
from chaoscert.exceptions import (InvalidInputError, NondegeneracyWarning,
                                  TruncationMismatchError)
from chaoscert.gallery import remark315_sequence
from chaoscert.hilbert import OperatorMatrix, schatten_norm
from chaoscert.tensors import ChaosExpansion, Kernel, ScalarKernel

SQ = ScalarKernel.basis_tensor((0, 0), 1)


def square_case():
    f = Kernel.single(SQ, 0, 1)
    return f, ChaosExpansion.single(f), TargetSpec({2: OperatorMatrix.diag([2.0])})


def random_expansion(seed, orders=(1, 2, 3), hdim=3, Hdim=3):
    rng = np.random.default_rng(seed)
    kernels = {r: random_component_kernel(rng, r, hdim, Hdim, density=0.7, scale=rng.uniform(0.3, 1.2))
               for r in orders}
    return ChaosExpansion(hdim, Hdim, kernels)


def dense_of(F):
    return {r: [c.to_dense() for c in K.components] for r, K in F.kernels.items()}


def random_targets(seed, dim, orders=(1, 2, 4)):
    rng = np.random.default_rng(seed)
    per = {}
    for r in orders:
        A = rng.standard_normal((dim, dim)) * 0.4
        per[r] = A @ A.T
    return per


# ---- constants ----

def test_constant_examples():
    assert constant_cp(2, 1) == pytest.approx(2 * math.sqrt(2), rel=1e-15)
    assert constant_cp(3, 2) == pytest.approx(12 * math.sqrt(2), rel=1e-15)
    assert constant_cp(3, 1) == pytest.approx(3 * math.sqrt(24), rel=1e-15)
    assert (constant_cpq(1, 2), constant_cpq(2, 3), constant_cpq(1, 3)) == (1, 16, 2)
    assert (constant_cpqchi(2, 2, 1), constant_cpqchi(2, 3, 1), constant_cpqchi(3, 3, 2)) == (4, 12, 144)


def test_constants_exact_and_positive():
    for p in range(2, 12):
        for r in range(1, p):
            sq = constant_cp_squared(p, r)
            assert isinstance(sq, int) and sq > 0
            assert constant_cp(p, r) == pytest.approx(c_p(p, r), rel=1e-14)
            assert constant_cp(p, r) ** 2 == pytest.approx(sq, rel=1e-14)
    for p in range(1, 9):
        for q in range(p + 1, 10):
            assert isinstance(constant_cpq(p, q), int)
            assert constant_cpq(p, q) == c_pq(p, q)
            for chi in range(1, p):
                ex = constant_cpqchi_exact(p, q, chi)
                assert ex > 0 and (2 * ex).denominator == 1
                assert float(ex) == pytest.approx(c_pqchi(p, q, chi), rel=1e-14)


def test_constants_large_orders_keep_precision():
    # sqrt((2p-2r)!) with a 40-digit factorial; compare against a 60-digit reference
    from decimal import Decimal, localcontext
    p, r = 20, 1
    a = p * math.factorial(r - 1) * math.comb(p - 1, r - 1) ** 2
    with localcontext() as ctx:
        ctx.prec = 60
        ref = float(Decimal(a) * Decimal(math.factorial(2 * p - 2 * r)).sqrt())
    assert constant_cp(p, r) == ref


@pytest.mark.parametrize("args", [(1, 1), (3, 3), (3, 0), (2, 2)])
def test_constant_cp_range(args):
    with pytest.raises(InvalidInputError):
        constant_cp(*args)


def test_constant_other_ranges():
    with pytest.raises(InvalidInputError):
        constant_cpq(3, 3)
    with pytest.raises(InvalidInputError):
        constant_cpq(3, 2)
    with pytest.raises(InvalidInputError):
        constant_cpqchi(2, 3, 2)
    with pytest.raises(InvalidInputError):
        constant_cpqchi(3, 3, 0)


# ---- gamma terms ----

def test_gamma_examples():
    _, F, _ = square_case()
    g = gamma_terms(F, 0, 0, 2)
    assert g["diag"][1] == 0.0
    assert g["diag"][2] == pytest.approx(8.0, rel=1e-14)
    assert g["cross"][(1, 2)] == 0.0 and g["cross"][(2, 1)] == 0.0
    F1 = ChaosExpansion.single(Kernel.from_matrix(np.eye(2)))
    g1 = gamma_terms(F1, 0, 1, 3)
    assert all(v == 0 for v in g1["diag"].values())
    assert all(v == 0 for v in g1["cross"].values())


def test_gamma_index_errors():
    _, F, _ = square_case()
    with pytest.raises(InvalidInputError):
        gamma_terms(F, 0, 1, 2)
    with pytest.raises(InvalidInputError):
        gamma_terms(F, 0, 0, 0)


def test_cross_indicator_uses_unsquared_contraction_norm():
    """Scaling f_2 by s scales the indicator term by s^2 (norm), not s^4 (squared norm)."""
    h = ScalarKernel.basis_tensor((0,), 1)
    for s in (0.5, 3.0):
        F = ChaosExpansion(1, 1, {1: Kernel.single(h, 0, 1), 2: Kernel.single(SQ * s, 0, 1)})
        g = gamma_terms(F, 0, 0, 2)
        # ||f_1||^2 = 1, ||f_2 (x)_1 f_2|| = s^2, c(1,2) = 1, chi-sum empty
        assert g["cross"][(1, 2)] == pytest.approx(s ** 2, rel=1e-14)
        assert g["cross"][(2, 1)] == pytest.approx(s ** 2, rel=1e-14)
    src = inspect.getsource(C.gamma_terms) + inspect.getsource(C._cross_sum)
    for line in src.splitlines():
        if "constant_cpq(" in line and "chi" not in line:
            assert not re.search(r"\]\s*\*\*\s*2", line), line


@given(st.integers(0, 2 ** 31))
def test_gamma_terms_against_oracle(seed):
    F = random_expansion(seed)
    dense = dense_of(F)
    ref = oracle_terms(dense, {}, F.Hdim, 3, F.Hdim)["R3"]
    S = 0.0
    for i in range(F.Hdim):
        for j in range(F.Hdim):
            g = gamma_terms(F, i, j, 3)
            S += sum(g["diag"].values()) + sum(g["cross"].values())
    assert math.sqrt(F.Hdim) * 3 * math.sqrt(S) == pytest.approx(ref, rel=1e-10)


# ---- R terms ----

def test_r_terms_square_example():
    _, F, T = square_case()
    rep = r_terms(F, T, 2, 1)
    assert rep.R2 == pytest.approx(0.0, abs=1e-14)
    assert rep.R3 == pytest.approx(2 * math.sqrt(8), rel=1e-14)
    assert rep.R1 == rep.R4 == rep.R5 == rep.R6 == 0.0
    assert rep.bound == pytest.approx(2 * math.sqrt(8))


def test_r_terms_gaussian_match():
    A = np.array([[0.6, 0.0, 0.2], [0.1, -0.4, 0.0]])
    F = ChaosExpansion.single(Kernel.from_matrix(A))
    T = TargetSpec({1: order_covariances(F)[1]})
    rep = r_terms(F, T, 1, 2)
    assert rep.R1 == rep.R3 == 0.0 and rep.R2 == pytest.approx(0, abs=1e-14)
    assert rep.R4 == rep.R5 == 0.0 and rep.bound == pytest.approx(0, abs=1e-14)
    rep1 = r_terms(F, T, 1, 1)
    assert rep1.R4 == pytest.approx(1.5 * order_covariances(F)[1][1, 1])
    with_tail = TargetSpec({1: order_covariances(F)[1], 3: np.diag([0.5, 0.25])})
    assert r_terms(F, with_tail, 1, 2).R6 == pytest.approx(0.375)
    assert r_terms(F, with_tail, 3, 2).R6 == 0.0


@given(st.integers(0, 2 ** 31), st.integers(1, 4), st.integers(0, 3))
def test_r_terms_against_oracle(seed, N, M):
    F = random_expansion(seed)
    per = random_targets(seed + 1, F.Hdim)
    rep = r_terms(F, TargetSpec(per), N, M)
    ref = oracle_terms(dense_of(F), per, F.Hdim, N, M)
    for k, v in ref.items():
        assert getattr(rep, k) == pytest.approx(v, rel=1e-10, abs=1e-12), k
    assert rep.bound == pytest.approx(sum(ref.values()), rel=1e-10, abs=1e-12)


def test_r5_partial_trace_diagnostic():
    F = random_expansion(3)
    rep = r_terms(F, TargetSpec(random_targets(4, 3)), 3, 1)
    d = rep.diagnostics
    assert d["R5_partial_trace"] <= rep.R5 + 1e-15
    cov = order_covariances(F)
    head = sum(np.trace(c[:1, :1]) for c in cov.values())
    assert d["R5_partial_trace"] == pytest.approx(math.sqrt(head * 6 * d["cov_tail"]))


def test_r_terms_errors():
    F = random_expansion(0)
    T = TargetSpec(random_targets(0, 3))
    with pytest.raises(InvalidInputError):
        r_terms(F, T, 0, 1)
    with pytest.raises(InvalidInputError):
        r_terms(F, T, 1, 4)
    with pytest.raises(TruncationMismatchError):
        r_terms(F, TargetSpec({1: np.eye(2)}), 1, 1)


# ---- grid bounds ----

def test_theorem35_examples():
    A = np.array([[0.6, 0.0], [0.1, -0.4]])
    F = ChaosExpansion.single(Kernel.from_matrix(A))
    T = TargetSpec({1: order_covariances(F)[1]})
    assert theorem35_bound(F, T, [1], [2]).bound == pytest.approx(0, abs=1e-14)
    with pytest.raises(InvalidInputError):
        theorem35_bound(F, T, [], [1])
    with pytest.raises(InvalidInputError):
        theorem35_bound(F, T, [1], [])


@given(st.integers(0, 2 ** 31), st.sets(st.integers(1, 4), min_size=1), st.sets(st.integers(0, 3), min_size=1),
       st.integers(1, 4), st.integers(0, 3))
def test_grid_monotone(seed, Ns, Ms, extraN, extraM):
    F = random_expansion(seed)
    T = TargetSpec(random_targets(seed, 3))
    small = theorem35_bound(F, T, sorted(Ns), sorted(Ms))
    big = theorem35_bound(F, T, sorted(Ns | {extraN}), sorted(Ms | {extraM}))
    assert big.bound <= small.bound
    assert small.bound == min(r["bound"] for r in small.grid_table)
    assert len(small.grid_table) == len(Ns) * len(Ms)


@given(st.integers(0, 2 ** 31), st.integers(1, 4), st.integers(1, 3))
def test_fixed_chaos_equals_theorem35(seed, p, Hdim):
    rng = np.random.default_rng(seed)
    f = random_component_kernel(rng, p, 3, Hdim, scale=0.8)
    B = rng.standard_normal((Hdim, Hdim))
    T = B @ B.T
    grid = list(range(Hdim + 1))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NondegeneracyWarning)
        a = fixed_chaos_bound(f, T, grid)
        b = theorem35_bound(ChaosExpansion.single(f), TargetSpec({p: T}), [p], grid)
    assert a.grid_table == b.grid_table
    assert (a.N, a.m, a.bound) == (b.N, b.m, b.bound)


def test_fixed_chaos_examples():
    f, _, _ = square_case()
    assert fixed_chaos_bound(f, np.array([[2.0]]), [1]).bound == pytest.approx(2 * math.sqrt(8))
    g = Kernel.single(ScalarKernel.basis_tensor((0,), 1), 0, 1)
    assert fixed_chaos_bound(g, np.eye(1), [1]).bound == 0.0
    with pytest.raises(InvalidInputError):
        fixed_chaos_bound(g, -np.eye(1), [1])
    with pytest.warns(NondegeneracyWarning):
        fixed_chaos_bound(g, np.zeros((1, 1)), [1])


def test_staged_grid_square_and_remark315():
    _, F, T = square_case()
    # N = 1 leaves R1 + R6 = sqrt(2) + 1 in the tail stage
    loose = staged_grid(F, T, eps=100.0)
    assert (loose["N"], loose["m"]) == (1, 1) and loose["stage_n"]
    st_ = staged_grid(F, T, eps=6.0)
    assert (st_["N"], st_["m"]) == (2, 1)
    assert st_["stage_tail"] and st_["stage_cut"] and not st_["stage_n"]
    assert st_["report"].bound == pytest.approx(2 * math.sqrt(8))
    assert staged_grid(F, T, eps=18.0)["stage_n"]
    with pytest.raises(InvalidInputError):
        staged_grid(F, T, eps=0)
    Fm = random_expansion(7, orders=(1, 2, 3))
    Tm = TargetSpec(random_targets(8, 3, orders=(1,)))
    res = staged_grid(Fm, Tm, eps=1e6)
    assert res["N"] == 1 and res["m"] == 1


def test_sequence_bound_uses_sup_tail():
    F1 = random_expansion(1, orders=(1, 2))
    F2 = random_expansion(2, orders=(1, 2, 3))
    T = TargetSpec(random_targets(3, 3, orders=(1,)))
    out = sequence_bound([F1, F2], T, [1, 2], [3])
    tail2 = C.tail_masses(F2)
    assert out["R1_sup"][2] == pytest.approx(math.sqrt(tail2[2]))
    assert out["R1_sup"][1] == pytest.approx(math.sqrt(max(C.tail_masses(F1)[1], tail2[1])))
    for rep in out["reports"]:
        for row in rep.grid_table:
            assert row["R1"] == out["R1_sup"][row["N"]]
    with pytest.raises(InvalidInputError):
        sequence_bound([], T, [1], [1])


def test_report_json_and_csv():
    F = random_expansion(5)
    rep = theorem35_bound(F, TargetSpec(random_targets(5, 3)), [1, 2], [1, 3])
    obj = json.loads(rep.dumps())
    assert set(obj) >= {"R1", "R2", "R3", "R4", "R5", "R6", "N", "m", "bound", "grid_table", "diagnostics"}
    assert obj["bound"] == pytest.approx(sum(obj[k] for k in ("R1", "R2", "R3", "R4", "R5", "R6")))
    lines = rep.to_csv().strip().splitlines()
    assert lines[0] == "N,m,R1,R2,R3,R4,R5,R6,bound" and len(lines) == 5


# ---- Gaussian pair ----

def test_pair_bound_examples():
    e1, e2 = np.diag([1.0, 0.0]), np.diag([0.0, 1.0])
    with pytest.warns(NondegeneracyWarning):
        pb = gaussian_pair_bound(e1, e2)
    assert pb.value == pytest.approx(1.0) and not pb.nondegenerate
    assert gaussian_pair_bound(np.diag([2.0, 0.0]), np.eye(2)).value == pytest.approx(1.0)
    assert gaussian_pair_bound(np.eye(3), np.eye(3)).value == 0.0
    with pytest.raises(InvalidInputError):
        gaussian_pair_bound(np.diag([1.0, -1.0]), np.eye(2))
    with pytest.raises(TruncationMismatchError):
        gaussian_pair_bound(np.eye(2), np.eye(3))


@given(st.integers(0, 2 ** 31), st.integers(1, 5))
def test_pair_bound_pseudometric(seed, d):
    rng = np.random.default_rng(seed)
    mats = []
    for _ in range(3):
        A = rng.standard_normal((d, d))
        mats.append(A @ A.T + 0.1 * np.eye(d))
    a, b, c = mats
    dab = gaussian_pair_bound(a, b).value
    assert dab == pytest.approx(gaussian_pair_bound(b, a).value, rel=1e-12)
    assert gaussian_pair_bound(a, a).value == pytest.approx(0, abs=1e-12)
    assert dab <= gaussian_pair_bound(a, c).value + gaussian_pair_bound(c, b).value + 1e-10


# ---- conditions ----

def test_check_fmt_examples():
    A = np.array([[0.6, 0.0], [0.1, -0.4]])
    F = ChaosExpansion.single(Kernel.from_matrix(A))
    rep = check_fmt_conditions(F, TargetSpec({1: order_covariances(F)[1]}), 1e-12)
    assert rep["trace_gap"][1] == pytest.approx(0, abs=1e-14)
    assert rep["contraction_max"][1] == 0.0 and rep["all_within_tol"]
    _, Fs, Ts = square_case()
    rs = check_fmt_conditions(Fs, Ts, 0.5)
    assert rs["contraction_max"][2] == pytest.approx(1.0)
    assert rs["flags"]["contraction"][2] and not rs["all_within_tol"]
    assert not check_fmt_conditions(Fs, Ts, 2.0)["flags"]["contraction"][2]


@pytest.mark.parametrize("n", [1, 5, 20])
def test_check_fmt_remark315_gap_one(n):
    F, TZ, _ = remark315_sequence(2.0, 0.75, n)
    rep = check_fmt_conditions(F, TargetSpec({1: TZ}), 1e-9)
    assert rep["trace_gap"][1] == pytest.approx(1.0, rel=1e-12)


# ---- target spec ----

def test_target_spec_json_and_validation():
    T = TargetSpec({1: np.eye(2), 3: np.diag([0.5, 0.0])})
    back = TargetSpec.from_json(json.loads(json.dumps(T.to_json())))
    assert back.dim == 2 and set(back.per_order) == {1, 3}
    assert np.allclose(back.aggregate, np.diag([1.5, 1.0]))
    assert TargetSpec.from_json(OperatorMatrix.identity(2).to_json()).per_order.keys() == {1}
    with pytest.raises(InvalidInputError):
        TargetSpec({1: np.array([[1.0, 0.5], [0.0, 1.0]])})
    with pytest.raises(InvalidInputError):
        TargetSpec({1: np.diag([1.0, -1.0])})
    with pytest.raises(TruncationMismatchError):
        TargetSpec({1: np.eye(2), 2: np.eye(3)})
    with pytest.raises(InvalidInputError):
        TargetSpec({})
    with pytest.warns(NondegeneracyWarning):
        assert not TargetSpec({2: np.diag([1.0, 0.0])}).check_nondegenerate()


# ---- vector flattening ----

def test_flatten_single_component_identity():
    rng = np.random.default_rng(0)
    f = random_component_kernel(rng, 2, 3, 2)
    G = flatten_vector_chaos([(2, f)])
    assert G.orders == [2] and G.Hdim == 2
    for a, b in zip(G.kernel(2).components, f.components):
        assert a.allclose(b)


def test_flatten_distinct_orders_block_diagonal():
    rng = np.random.default_rng(1)
    f1 = random_component_kernel(rng, 1, 4, 2)
    f2 = random_component_kernel(rng, 2, 4, 2)
    G = flatten_vector_chaos([(1, f1), (2, f2)])
    assert G.orders == [1, 2] and G.Hdim == 4
    assert all(c.nnz == 0 for c in G.kernel(1).components[2:])
    assert all(c.nnz == 0 for c in G.kernel(2).components[:2])
    cov = exact_covariance(G).entries
    blocks = [exact_covariance(ChaosExpansion.single(f)).entries for f in (f1, f2)]
    assert np.allclose(cov, block_diagonal(blocks), atol=1e-14)
    assert schatten_norm(cov, 1) == pytest.approx(sum(schatten_norm(b, 1) for b in blocks))


def test_flatten_layout_permutation():
    rng = np.random.default_rng(2)
    comps = [(2, random_component_kernel(rng, 2, 3, 3)), (1, random_component_kernel(rng, 1, 3, 3))]
    cb = exact_covariance(flatten_vector_chaos(comps, "block")).entries
    ci = exact_covariance(flatten_vector_chaos(comps, "interleaved")).entries
    perm = layout_permutation(3, 2)
    P = np.zeros((6, 6))
    P[perm, np.arange(6)] = 1.0
    assert np.allclose(P @ cb @ P.T, ci, atol=1e-14)
    assert schatten_norm(cb, 1) == pytest.approx(schatten_norm(ci, 1))


def test_flatten_errors():
    rng = np.random.default_rng(3)
    f = random_component_kernel(rng, 2, 3, 2)
    g = random_component_kernel(rng, 2, 4, 2)
    with pytest.raises(TruncationMismatchError):
        flatten_vector_chaos([(2, f), (2, g)])
    with pytest.raises(InvalidInputError):
        flatten_vector_chaos([(1, f)])
    with pytest.raises(InvalidInputError):
        flatten_vector_chaos([])
    with pytest.raises(InvalidInputError):
        flatten_vector_chaos([(2, f)], layout="diagonal")
