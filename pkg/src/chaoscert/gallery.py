"""Constructive counterexamples with machine-checked claims.

* :func:`example11_pair`: two rank-one Gaussians whose norm moments agree
  although their laws (and weak fourth moments) differ.
* :func:`remark315_sequence`: first-chaos perturbations ``F_n = Z + Y_n``
  whose coordinate fourth moments converge while the trace-norm gap of
  the covariances stays at one.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .chaos import exact_covariance, exact_fourth_moment
from .exceptions import InvalidInputError
from .hilbert import OperatorMatrix, Truncation, schatten_norm, trace
from .tensors import ChaosExpansion, Kernel, ScalarKernel


@dataclass
class Claim:
    description: str
    expected: float
    actual: float
    tol: float
    relation: str = "eq"   # "eq", "lt", "gt", "le"

    @property
    def ok(self) -> bool:
        a, e, t = self.actual, self.expected, self.tol
        if self.relation == "eq":
            return bool(abs(a - e) <= t)
        if self.relation == "lt":
            return bool(a < e)
        if self.relation == "gt":
            return bool(a > e)
        if self.relation == "le":
            return bool(a <= e + t)
        raise InvalidInputError(f"unknown relation {self.relation!r}")

    def to_json(self) -> dict:
        return {"description": self.description, "expected": float(self.expected),
                "actual": float(self.actual), "tol": float(self.tol),
                "relation": self.relation, "ok": self.ok}


@dataclass
class CounterexampleCase:
    name: str
    parameters: dict
    objects: dict
    claims: list = field(default_factory=list)

    def failures(self) -> list:
        return [c for c in self.claims if not c.ok]

    def verify(self) -> "CounterexampleCase":
        bad = self.failures()
        if bad:
            lines = "; ".join(f"{c.description}: {c.actual} vs {c.expected}" for c in bad)
            raise AssertionError(f"gallery case {self.name} failed: {lines}")
        return self

    def claims_json(self) -> dict:
        return {"name": self.name, "parameters": self.parameters,
                "claims": [c.to_json() for c in self.claims]}


def gaussian_norm_moments(T) -> tuple[float, float]:
    """``(E|Z|^2, E|Z|^4)`` for ``Z ~ N(0, T)``: ``tr T`` and ``(tr T)^2 + 2 ||T||_S2^2``."""
    t = trace(T)
    return t, t * t + 2.0 * schatten_norm(T, 2) ** 2


def example11_pair(m: int = 2):
    """Covariances ``e_0 (x) e_0`` and ``e_1 (x) e_1`` on ``R^m``.

    Returns
    -------
    (T1, T2, case)
        The two operators and a :class:`CounterexampleCase` holding the
        claims plus first-chaos realizations ``Z_i = I_1(h_0 (x) e_{i})``.
    """
    if m < 2:
        raise InvalidInputError("the pair needs m >= 2")
    e = np.eye(m)
    T1 = OperatorMatrix.rank_one(e[0])
    T2 = OperatorMatrix.rank_one(e[1])
    h0 = ScalarKernel.basis_tensor((0,), 1)
    Z1 = ChaosExpansion.single(Kernel.single(h0, 0, m))
    Z2 = ChaosExpansion.single(Kernel.single(h0, 1, m))
    claims = []
    for k, T in enumerate((T1, T2), start=1):
        n2, n4 = gaussian_norm_moments(T)
        claims += [Claim(f"trace of T{k}", 1.0, trace(T), 1e-12),
                   Claim(f"E|Z{k}|^2", 1.0, n2, 1e-12),
                   Claim(f"E|Z{k}|^4", 3.0, n4, 1e-12)]
    claims.append(Claim("S1 distance", 2.0, schatten_norm(T1 - T2, 1), 1e-12))
    w1 = exact_fourth_moment(Z1.kernel(1).component(0))
    w2 = exact_fourth_moment(Z2.kernel(1).component(0))
    claims += [Claim("E<Z1, e_0>^4", 3.0, w1, 1e-12),
               Claim("E<Z2, e_0>^4", 0.0, w2, 1e-12)]
    case = CounterexampleCase("example11", {"m": m},
                              {"T1": T1, "T2": T2, "Z1": Z1, "Z2": Z2}, claims)
    return T1, T2, case


def default_lambdas(m: int) -> np.ndarray:
    """``lambda_k = 2^{-k}`` for ``k = 1..m``."""
    return 2.0 ** -np.arange(1, m + 1, dtype=float)


def remark315_weights(gamma: float, n: int) -> np.ndarray:
    """``s_{n,k} = k^{-gamma} / sum_{j <= n} j^{-gamma}`` for ``k = 1..n``."""
    a = np.arange(1, n + 1, dtype=float) ** -gamma
    return a / a.sum()


def remark315_sequence(p_schatten: float, gamma: float, n: int, trunc: Truncation | None = None,
                       lambda_spec=None):
    """``F_n = Z + Y_n`` in the first chaos.

    ``Z`` has covariance ``diag(lambda_k)`` on coordinates ``0..Hdim-1`` of
    the isonormal space, and ``Y_n`` has covariance ``diag(s_{n,k})``
    (``k <= n``) on the next ``n`` coordinates, so the two are independent.

    Parameters
    ----------
    p_schatten : float
        Schatten index ``p > 1`` of the comparison norm.
    gamma : float
        Decay exponent in ``(1/p, 1)``.
    n : int
        Sequence index, ``1 <= n <= trunc.Hdim``.
    trunc : Truncation, optional
        Defaults to ``Hdim = n`` and ``hdim = 2 n``.
    lambda_spec : callable or array, optional
        ``lambda_k`` values (``m -> array`` or an explicit array); defaults
        to ``2^{-k}``.

    Returns
    -------
    (F_n, T_Z, case)
    """
    if not p_schatten > 1:
        raise InvalidInputError("Schatten index must exceed 1")
    lo = 1.0 - (p_schatten - 1.0) / p_schatten
    if not lo < gamma < 1.0:
        raise InvalidInputError(f"gamma must lie in ({lo}, 1), got {gamma}")
    trunc = trunc or Truncation(2 * n, n)
    m = trunc.Hdim
    if not 1 <= n <= m:
        raise InvalidInputError(f"need 1 <= n <= Hdim = {m}")
    if trunc.hdim < m + n:
        raise InvalidInputError(f"hdim must be at least Hdim + n = {m + n}")
    if lambda_spec is None:
        lam = default_lambdas(m)
    elif callable(lambda_spec):
        lam = np.asarray(lambda_spec(m), dtype=float)
    else:
        lam = np.asarray(lambda_spec, dtype=float)[:m]
    if lam.shape != (m,) or np.any(lam <= 0):
        raise InvalidInputError("lambda_k must be positive for every k <= Hdim")
    s = remark315_weights(gamma, n)
    comps = []
    for i in range(m):
        if i < n:
            idx = np.array([[i], [m + i]])
            vals = np.array([math.sqrt(lam[i]), math.sqrt(s[i])])
        else:
            idx = np.array([[i]])
            vals = np.array([math.sqrt(lam[i])])
        comps.append(ScalarKernel(1, trunc.hdim, idx, vals))
    F = ChaosExpansion(trunc.hdim, m, {1: Kernel(comps)})
    T_Z = OperatorMatrix.diag(lam)
    cov = exact_covariance(F)
    gap = cov.entries - T_Z.entries
    s_full = np.zeros(m)
    s_full[:n] = s
    claims = [Claim("S1 gap", 1.0, schatten_norm(gap, 1), 1e-12),
              Claim(f"S{p_schatten:g}^p gap", float(np.sum(s ** p_schatten)),
                    schatten_norm(gap, p_schatten) ** p_schatten, 1e-12)]
    for i in range(min(m, 3)):
        want = 3 * lam[i] ** 2 + 6 * lam[i] * s_full[i] + 3 * s_full[i] ** 2
        got = exact_fourth_moment(F.kernel(1).component(i))
        claims.append(Claim(f"E<F_n, e_{i}>^4", want, got, 1e-12))
    case = CounterexampleCase("remark315", {"p": p_schatten, "gamma": gamma, "n": n,
                                            "hdim": trunc.hdim, "Hdim": m},
                              {"F": F, "T_Z": T_Z, "s": s, "lambda": lam}, claims)
    return F, T_Z, case


def remark315_grid(p_schatten: float = 2.0, gamma: float = 0.75, ns=(10, 100, 1000),
                   trunc: Truncation | None = None):
    """Cases along an ``n``-grid plus the cross-``n`` monotonicity claims."""
    ns = sorted(ns)
    trunc = trunc or Truncation(2 * ns[-1], ns[-1])
    cases = [remark315_sequence(p_schatten, gamma, n, trunc)[2] for n in ns]
    claims = []
    for a, b in zip(cases, cases[1:]):
        ga = a.claims[1].actual
        gb = b.claims[1].actual
        claims.append(Claim(f"S{p_schatten:g} gap decreases n={a.parameters['n']}->{b.parameters['n']}",
                            ga, gb, 0.0, relation="lt"))
        claims.append(Claim(f"s_(n,1) decreases n={a.parameters['n']}->{b.parameters['n']}",
                            a.objects["s"][0], b.objects["s"][0], 0.0, relation="lt"))
    summary = CounterexampleCase("remark315_grid", {"p": p_schatten, "gamma": gamma, "ns": ns},
                                 {}, claims)
    return cases, summary
