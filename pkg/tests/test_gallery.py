import math

import numpy as np
import pytest

from _oracles import quad_moments
from chaoscert.certificates import TargetSpec, check_fmt_conditions, gaussian_pair_bound
from chaoscert.chaos import exact_covariance
from chaoscert.exceptions import InvalidInputError, NondegeneracyWarning
from chaoscert.gallery import (Claim, example11_pair, gaussian_norm_moments, remark315_grid,
                               remark315_sequence, remark315_weights)
from chaoscert.hilbert import Truncation, schatten_norm, trace


def test_example11_claims():
    T1, T2, case = example11_pair()
    case.verify()
    assert (trace(T1), trace(T2)) == (1.0, 1.0)
    assert gaussian_norm_moments(T1)[1] == 3.0 and gaussian_norm_moments(T2)[1] == 3.0
    assert schatten_norm(T1 - T2, 1) == pytest.approx(2.0)
    with pytest.warns(NondegeneracyWarning):
        assert gaussian_pair_bound(T1, T2).value == pytest.approx(1.0)
    weak = {c.description: c.actual for c in case.claims}
    assert weak["E<Z1, e_0>^4"] == pytest.approx(3.0) and weak["E<Z2, e_0>^4"] == 0.0


def test_example11_larger_m_and_errors():
    T1, T2, case = example11_pair(5)
    case.verify()
    assert T1.dim == 5
    with pytest.raises(InvalidInputError):
        example11_pair(1)


def test_example11_realizations_have_target_covariances():
    T1, T2, case = example11_pair(3)
    assert np.allclose(exact_covariance(case.objects["Z1"]).entries, T1.entries)
    assert np.allclose(exact_covariance(case.objects["Z2"]).entries, T2.entries)


@pytest.mark.parametrize("p,gamma,n", [(2.0, 0.75, 1), (2.0, 0.75, 10), (3.0, 0.8, 37), (1.5, 0.8, 100)])
def test_remark315_claims(p, gamma, n):
    F, TZ, case = remark315_sequence(p, gamma, n)
    case.verify()
    assert schatten_norm(exact_covariance(F).entries - TZ.entries, 1) == pytest.approx(1.0, abs=1e-12)
    rep = check_fmt_conditions(F, TargetSpec({1: TZ}), 1e-6)
    assert rep["trace_gap"][1] == pytest.approx(1.0, abs=1e-12)


def test_remark315_s2_decreases():
    gaps = []
    for n in (10, 100):
        F, TZ, _ = remark315_sequence(2.0, 0.75, n)
        gaps.append(schatten_norm(exact_covariance(F).entries - TZ.entries, 2) ** 2)
    assert gaps[1] < gaps[0]
    s10, s100 = remark315_weights(0.75, 10), remark315_weights(0.75, 100)
    assert gaps == pytest.approx([np.sum(s10 ** 2), np.sum(s100 ** 2)], rel=1e-12)


def test_remark315_fourth_moment_quadrature():
    F, TZ, _ = remark315_sequence(2.0, 0.75, 1)
    f = F.kernel(1).component(0).to_dense()
    _, m4 = quad_moments(f, npts=8)
    lam, s = 0.5, 1.0
    assert m4 == pytest.approx(3 * lam ** 2 + 6 * lam * s + 3 * s ** 2, rel=1e-12)


def test_remark315_grid_pins_gap_while_moments_converge():
    cases, summary = remark315_grid(ns=(10, 100, 1000))
    summary.verify()
    for c in cases:
        c.verify()
        assert c.claims[0].actual == pytest.approx(1.0, abs=1e-12)
    s1 = [c.objects["s"][0] for c in cases]
    assert s1[0] > s1[1] > s1[2]


def test_remark315_errors():
    with pytest.raises(InvalidInputError):
        remark315_sequence(2.0, 0.4, 5)
    with pytest.raises(InvalidInputError):
        remark315_sequence(2.0, 1.0, 5)
    with pytest.raises(InvalidInputError):
        remark315_sequence(1.0, 0.9, 5)
    with pytest.raises(InvalidInputError):
        remark315_sequence(2.0, 0.75, 5, Truncation(10, 4))
    with pytest.raises(InvalidInputError):
        remark315_sequence(2.0, 0.75, 5, Truncation(7, 5))
    with pytest.raises(InvalidInputError):
        remark315_sequence(2.0, 0.75, 3, lambda_spec=[1.0, 0.0, 1.0])


def test_custom_lambdas():
    F, TZ, case = remark315_sequence(2.0, 0.75, 3, lambda_spec=lambda m: 1.0 / np.arange(1, m + 1) ** 2)
    case.verify()
    assert np.allclose(np.diag(TZ.entries), [1.0, 0.25, 1 / 9])


def test_failing_claim_aborts():
    from chaoscert.gallery import CounterexampleCase
    bad = CounterexampleCase("x", {}, {}, [Claim("one", 1.0, 1.1, 1e-12)])
    assert len(bad.failures()) == 1
    with pytest.raises(AssertionError):
        bad.verify()
    assert Claim("lt", 2.0, 1.0, 0.0, "lt").ok and not Claim("gt", 2.0, 1.0, 0.0, "gt").ok
