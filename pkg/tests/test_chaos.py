import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from _oracles import ip_loop, quad_moments
from chaoscert._backend import BACKENDS
from chaoscert.chaos import (GaussianSample, carre_du_champ, derivative_pair, dirichlet_energy,
                             eval_expansion, eval_multiple_integral, exact_covariance,
                             exact_fourth_excess, gamma_sample, generator, inverse_generator,
                             malliavin_derivative_eval, sample_isonormal)
from chaoscert.corpus import random_component_kernel, random_kernel
from chaoscert.exceptions import TruncationMismatchError
from chaoscert.hilbert import Truncation, min_eigenvalue
from chaoscert.sampling import run_mc
from chaoscert.tensors import ChaosExpansion, Kernel, ScalarKernel

H11 = ScalarKernel.basis_tensor((0, 0), 1)
H12 = ScalarKernel.basis_tensor((0, 1), 2) * math.sqrt(2)  # (h1 h2 + h2 h1) / sqrt2

# Frozen Gauss-Hermite quadrature values of E F^4 - 3 (E F^2)^2 (see _oracles.quad_moments).
F3 = ScalarKernel.from_entries(3, 2, [((0, 0, 1), 0.7), ((0, 1, 1), -0.4), ((1, 1, 1), 0.25),
                                      ((0, 0, 0), 0.1)])
F3_EXCESS = 167.74545
G2 = ScalarKernel.from_entries(2, 3, [((0, 1), 0.5), ((1, 2), -0.3), ((2, 2), 0.8), ((0, 0), 0.2)])
G2_EXCESS = 23.676


def mixed_expansion(seed):
    rng = np.random.default_rng(seed)
    return ChaosExpansion(3, 2, {1: Kernel.from_matrix(rng.standard_normal((2, 3))),
                                 2: random_component_kernel(rng, 2, 3, 2),
                                 3: random_component_kernel(rng, 3, 3, 2, scale=0.5)})


def test_sample_isonormal_determinism_and_moments():
    a = sample_isonormal(Truncation(3, 1), 7)
    b = sample_isonormal(Truncation(3, 1), 7)
    assert np.array_equal(a.xi, b.xi) and a.hdim == 3
    big = sample_isonormal(3, 11, n=100_000).xi
    n = big.shape[0]
    assert np.all(np.abs(big.mean(0)) < 5 / math.sqrt(n))
    assert np.all(np.abs(big.var(0, ddof=1) - 1) < 5 * math.sqrt(2 / n))


def test_eval_examples():
    assert eval_multiple_integral(H11, [2.0]) == pytest.approx(3.0)
    x1, x2 = 0.7, -1.3
    assert eval_multiple_integral(H12, [x1, x2]) == pytest.approx(math.sqrt(2) * x1 * x2)
    assert H12.norm() == pytest.approx(1.0)
    with pytest.raises(TruncationMismatchError):
        eval_multiple_integral(H12, [1.0])


def test_eval_matches_loop_oracle(rng):
    for p in (1, 2, 3, 4):
        f = random_kernel(rng, p, 3, 0.7, normalize=False)
        x = rng.standard_normal(3)
        assert eval_multiple_integral(f, x) == pytest.approx(ip_loop(f.to_dense(), x), rel=1e-12,
                                                             abs=1e-12)


def test_backends_agree(rng):
    F = mixed_expansion(5)
    xi = rng.standard_normal((257, 3))
    vals = [eval_expansion(F, xi, backend=b) for b in BACKENDS]
    ders = [malliavin_derivative_eval(F, xi, backend=b) for b in BACKENDS]
    for v, d in zip(vals[1:], ders[1:]):
        assert np.allclose(v, vals[0], rtol=1e-13, atol=1e-13)
        assert np.allclose(d, ders[0], rtol=1e-13, atol=1e-13)


def test_eval_expansion_examples(rng):
    F = ChaosExpansion.single(Kernel.single(ScalarKernel.basis_tensor((0,), 2), 0, 3))
    x = rng.standard_normal(2)
    assert np.allclose(eval_expansion(F, x), [x[0], 0, 0])
    assert np.allclose(eval_expansion(ChaosExpansion(2, 3), x), 0)
    assert eval_expansion(F, GaussianSample(rng.standard_normal((4, 2)))).shape == (4, 3)


def test_exact_covariance_examples():
    F = ChaosExpansion.single(Kernel.single(ScalarKernel.basis_tensor((0,), 1), 0, 2))
    assert np.allclose(exact_covariance(F).entries, [[1, 0], [0, 0]])
    G = ChaosExpansion.single(Kernel.single(H11, 0, 1))
    assert exact_covariance(G).entries[0, 0] == pytest.approx(2.0)


def test_fourth_excess_anchors():
    assert abs(exact_fourth_excess(H11) - 48) <= 1e-12 * 48
    assert abs(exact_fourth_excess(H12) - 24) <= 1e-12 * 24
    assert exact_fourth_excess(ScalarKernel.basis_tensor((0,), 3)) == 0.0
    assert exact_fourth_excess(F3) == pytest.approx(F3_EXCESS, rel=1e-12)
    assert exact_fourth_excess(G2) == pytest.approx(G2_EXCESS, rel=1e-12)


@settings(max_examples=15)
@given(st.integers(0, 2 ** 31), st.integers(2, 3), st.integers(1, 2))
def test_fourth_excess_against_quadrature(seed, p, d):
    f = random_kernel(np.random.default_rng(seed), p, d, 0.8)
    m2, m4 = quad_moments(f.to_dense(), npts=2 * p + 1)
    assert exact_fourth_excess(f) == pytest.approx(m4 - 3 * m2 * m2, rel=1e-9, abs=1e-9)


def test_malliavin_examples(rng):
    F = ChaosExpansion.single(Kernel.single(ScalarKernel.basis_tensor((0,), 1), 0, 1))
    assert np.allclose(malliavin_derivative_eval(F, rng.standard_normal(1)), [[1.0]])
    G = ChaosExpansion.single(Kernel.single(H11, 0, 1))
    assert malliavin_derivative_eval(G, [1.5])[0, 0] == pytest.approx(3.0)


def test_malliavin_slice_rule(rng):
    """Entry (k, i) equals sum_r r I_{r-1}(f_{r,i}(k, .)) built from the dense slices."""
    F = mixed_expansion(2)
    x = rng.standard_normal(3)
    D = malliavin_derivative_eval(F, x)
    for i in range(F.Hdim):
        for k in range(F.hdim):
            want = 0.0
            for r, K in F.kernels.items():
                dense = K.component(i).to_dense()
                sl = dense[k]
                want += r * (float(sl) if r == 1 else ip_loop(sl, x))
            assert D[k, i] == pytest.approx(want, abs=1e-12)


def test_malliavin_mean(rng):
    F = mixed_expansion(3)
    xi = rng.standard_normal((200_000, 3))
    D = malliavin_derivative_eval(F, xi)
    se = D.std(0, ddof=1) / math.sqrt(xi.shape[0])
    order1 = np.stack([c.to_dense() for c in F.kernel(1).components], axis=1)
    assert np.all(np.abs(D.mean(0) - order1) <= 5 * se + 1e-12)


def test_gamma_examples(rng):
    F = ChaosExpansion.single(Kernel.single(ScalarKernel.basis_tensor((0,), 1), 0, 2))
    for _ in range(3):
        G = gamma_sample(F, rng.standard_normal(1))
        assert np.allclose(G.entries, [[1, 0], [0, 0]])
    P = ChaosExpansion.single(random_component_kernel(rng, 3, 3, 3))
    xi = rng.standard_normal((500, 3))
    A = malliavin_derivative_eval(P, xi)
    G = gamma_sample(P, xi)
    assert np.allclose(G, carre_du_champ(A, A) / 3, atol=1e-12)
    assert min(min_eigenvalue(g) for g in G) >= -1e-9


def test_gamma_swap_is_exact_transpose(rng):
    F = mixed_expansion(8)
    G = mixed_expansion(9)
    xi = rng.standard_normal((100, 3))
    assert np.array_equal(gamma_sample(F, xi, G), np.transpose(gamma_sample(G, xi, F), (0, 2, 1)))


def test_generators():
    F = mixed_expansion(1)
    LF = generator(F)
    assert LF.kernel(3).component(0).allclose(F.kernel(3).component(0) * -3.0)
    assert inverse_generator(LF).kernel(2).component(1).allclose(F.kernel(2).component(1))


def test_gamma_and_energy_mc(rng):
    F = mixed_expansion(4)
    xi = rng.standard_normal((200_000, 3))
    A, B = derivative_pair(F, xi)
    G = carre_du_champ(A, B)
    se = G.std(0, ddof=1) / math.sqrt(xi.shape[0])
    assert np.all(np.abs(G.mean(0) - exact_covariance(F).entries) <= 5 * se)
    tr = np.trace(carre_du_champ(A, A), axis1=1, axis2=2)
    assert abs(tr.mean() - dirichlet_energy(F)) <= 5 * tr.std(ddof=1) / math.sqrt(tr.size)


def test_isometry_and_centering_mc():
    f = ChaosExpansion.single(Kernel.single(H11, 0, 1))
    res = run_mc(lambda r, k: np.hstack([eval_expansion(f, r.standard_normal((k, 1))) ** 2,
                                         eval_expansion(f, r.standard_normal((k, 1)))]),
                 200_000, seed=3, shards=2)
    assert abs(res.value[0] - 2.0) <= 5 * res.stderr[0]
    assert abs(res.value[1]) <= 5 * res.stderr[1]
