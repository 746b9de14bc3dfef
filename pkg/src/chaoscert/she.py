"""Stochastic heat equation on (0, 1) with Dirichlet boundary, in its eigenbasis.

Modes ``e_k(x) = sqrt(2) sin(k pi x)`` have eigenvalues ``lambda_k = (k pi)^2``
and the noise covariance is diagonal, ``Q e_k = q_k e_k``.  Each mode is
an Ornstein-Uhlenbeck process, so every covariance below is closed form;
the state space is truncated at ``K`` modes (index ``k-1`` holds mode ``k``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import zeta

from .certificates import CertificateReport, TargetSpec, theorem35_bound
from .exceptions import InvalidInputError, TruncationMismatchError
from .hilbert import OperatorMatrix
from .tensors import ChaosExpansion, Kernel, ScalarKernel


@dataclass(frozen=True)
class HeatModel:
    """Noise family and spectral truncation.

    Parameters
    ----------
    q_family : {"power", "geometric"}
        ``q_k = k^{-beta}`` or ``q_k = rho^k``.
    beta : float
        Power-law exponent, ``beta > 1``.
    rho : float
        Geometric ratio in ``(0, 1)``.
    K : int
        Number of retained modes.
    """

    q_family: str = "power"
    beta: float = 2.0
    rho: float = 0.5
    K: int = 64

    def __post_init__(self):
        if self.K < 1:
            raise InvalidInputError("K must be >= 1")
        if self.q_family == "power":
            if not self.beta > 1:
                raise InvalidInputError("power-law noise needs beta > 1")
        elif self.q_family == "geometric":
            if not 0 < self.rho < 1:
                raise InvalidInputError("geometric noise needs 0 < rho < 1")
        else:
            raise InvalidInputError(f"unknown noise family {self.q_family!r}")

    def q(self, k) -> np.ndarray:
        k = np.asarray(k, dtype=float)
        if self.q_family == "power":
            return k ** -self.beta
        return self.rho ** k

    @property
    def modes(self) -> np.ndarray:
        return np.arange(1, self.K + 1, dtype=float)

    @property
    def lambdas(self) -> np.ndarray:
        return (math.pi * self.modes) ** 2

    @property
    def qs(self) -> np.ndarray:
        return self.q(self.modes)

    def tail_q_over_lambda(self) -> float:
        """``sum_{k > K} q_k / lambda_k`` (exact for power laws, an upper bound otherwise)."""
        K = self.K
        if self.q_family == "power":
            return float(zeta(self.beta + 2.0, K + 1.0)) / math.pi ** 2
        return self.rho ** (K + 1) / ((1.0 - self.rho) * (K + 1) ** 2 * math.pi ** 2)


def _check_t(t):
    if not (t >= 0 and math.isfinite(t)):
        raise InvalidInputError(f"time must be finite and >= 0, got {t}")


def mode_variances(model: HeatModel, t: float) -> np.ndarray:
    """``q_k / (2 lambda_k) (1 - exp(-2 lambda_k t))`` for ``k = 1..K``."""
    _check_t(t)
    lam = model.lambdas
    return model.qs / (2 * lam) * -np.expm1(-2 * lam * t)


def covariance_at_time(model: HeatModel, t: float) -> OperatorMatrix:
    """Covariance of ``u(t)`` started from zero."""
    return OperatorMatrix.diag(mode_variances(model, t))


def galerkin_covariance(model: HeatModel, n: int, t: float) -> OperatorMatrix:
    """Covariance of the ``n``-mode Galerkin solution, embedded in ``K`` modes."""
    if not 0 <= n <= model.K:
        raise InvalidInputError(f"n must lie in [0, {model.K}]")
    v = mode_variances(model, t)
    v[n:] = 0.0
    return OperatorMatrix.diag(v)


def invariant_covariance(model: HeatModel) -> OperatorMatrix:
    """``diag(q_k / (2 lambda_k))``."""
    return OperatorMatrix.diag(model.qs / (2 * model.lambdas))


def weak_error_parts(model: HeatModel, n: int, T: float) -> dict:
    """Components of the Galerkin weak-error bound.

    ``truncated`` sums ``(1/4)(q_k/lambda_k)(1 - e^{-2 lambda_k T})`` over
    ``n < k <= K``; ``remainder`` majorizes the modes beyond ``K`` using
    ``1 - e^{-x} <= 1``.
    """
    if not 0 <= n:
        raise InvalidInputError("n must be >= 0")
    _check_t(T)
    lam = model.lambdas
    terms = 0.25 * model.qs / lam * -np.expm1(-2 * lam * T)
    truncated = float(np.sum(terms[n:])) if n < model.K else 0.0
    if T == 0:
        remainder = 0.0
    elif n <= model.K:
        remainder = 0.25 * model.tail_q_over_lambda()
    else:
        k = np.arange(model.K + 1, n + 1, dtype=float)
        below = float(np.sum(model.q(k) / (math.pi * k) ** 2))
        remainder = max(0.25 * (model.tail_q_over_lambda() - below), 0.0)
    return {"truncated": truncated, "remainder": remainder, "bound": truncated + remainder}


def weak_error_bound(model: HeatModel, n: int, T: float) -> float:
    """Certified bound on ``|E phi(u(T)) - E phi(u_n(T))|`` for admissible ``phi``."""
    return weak_error_parts(model, n, T)["bound"]


def evolve_expansion(F0: ChaosExpansion, model: HeatModel, t: float) -> ChaosExpansion:
    """Apply the heat semigroup: component ``i`` of every kernel scaled by ``exp(-lambda_{i+1} t)``.

    The result lives on ``Hdim = K``.
    """
    _check_t(t)
    if F0.Hdim > model.K:
        raise TruncationMismatchError(f"expansion Hdim {F0.Hdim} exceeds K = {model.K}")
    decay = np.exp(-model.lambdas[: F0.Hdim] * t)
    out = {}
    for r, K in F0.kernels.items():
        out[r] = K.scaled(decay).embedded(Hdim=model.K)
    return ChaosExpansion(F0.hdim, model.K, out)


def stochastic_convolution_kernel(model: HeatModel, t: float, hdim: int, offset: int) -> Kernel:
    """First-chaos kernel ``sum_k sqrt(var_k(t)) h_{offset+k-1} (x) e_k``."""
    if offset + model.K > hdim:
        raise InvalidInputError("not enough isonormal coordinates for the noise block")
    sd = np.sqrt(mode_variances(model, t))
    comps = []
    for k in range(model.K):
        if sd[k] > 0:
            comps.append(ScalarKernel(1, hdim, [[offset + k]], [sd[k]]))
        else:
            comps.append(ScalarKernel.zero(1, hdim))
    return Kernel(comps)


def solution_expansion(F0: ChaosExpansion | None, model: HeatModel, t: float) -> ChaosExpansion:
    """Chaos expansion of ``u(t)``: evolved initial data plus the Gaussian noise block.

    The noise uses ``K`` isonormal coordinates placed after those of ``F0``.
    """
    d0 = 0 if F0 is None else F0.hdim
    hdim = d0 + model.K
    noise = stochastic_convolution_kernel(model, t, hdim, d0)
    out = ChaosExpansion(hdim, model.K, {1: noise})
    if F0 is not None:
        out = out + evolve_expansion(F0, model, t).embedded(hdim=hdim)
    return out


def invariant_gap_certificate(F0: ChaosExpansion | None, model: HeatModel, t: float,
                              N_grid=(1,), m_grid=None) -> CertificateReport:
    """Certificate for ``d2(u(t), u_inf)`` against the invariant Gaussian law.

    Targets: the invariant covariance at order 1 and zero at higher orders.
    """
    F = solution_expansion(F0, model, t)
    m_grid = [model.K] if m_grid is None else list(m_grid)
    targets = TargetSpec({1: invariant_covariance(model)})
    rep = theorem35_bound(F, targets, N_grid, m_grid)
    lam = model.lambdas
    gaussian = 0.5 * float(np.sum(model.qs / (2 * lam) * np.exp(-2 * lam * t)))
    rep.diagnostics["gaussian_pair_closed_form"] = gaussian
    rep.diagnostics["t"] = float(t)
    return rep


def simulate_modes(model: HeatModel, n: int, t: float, rng, size: int | None = None) -> np.ndarray:
    """Exact draws of the first ``n`` modes of ``u(t)`` (zeros beyond), shape ``(K,)`` or ``(size, K)``."""
    if not 0 <= n <= model.K:
        raise InvalidInputError(f"n must lie in [0, {model.K}]")
    sd = np.sqrt(mode_variances(model, t))
    sd[n:] = 0.0
    shape = (model.K,) if size is None else (int(size), model.K)
    return rng.standard_normal(shape) * sd


def galerkin_weak_error_mc(model: HeatModel, n: int, T: float, dictionary, n_samples: int,
                           seed: int = 0, chunk: int = 1 << 14) -> dict:
    """MC weak errors ``|E phi(u(T)) - E phi(u_n(T))|`` over a dictionary.

    ``u_n(T)`` is the projection of the same draw of ``u(T)`` onto the
    first ``n`` modes, so each entry's gap is the mean of paired
    differences and its standard error comes from those differences.
    """
    from .sampling import Moments, shard_rng, tree_reduce
    if n_samples < 2:
        raise InvalidInputError("need at least 2 samples")
    rng = shard_rng(seed, 0, stream=11)
    parts = []
    left = int(n_samples)
    while left > 0:
        k = min(chunk, left)
        U = simulate_modes(model, model.K, T, rng, k)
        Un = U.copy()
        Un[:, n:] = 0.0
        parts.append(Moments.from_batch(dictionary.evaluate(U) - dictionary.evaluate(Un)))
        left -= k
    mom = tree_reduce(parts)
    return {"gaps": np.abs(mom.mean), "stderr": mom.stderr,
            "bound": weak_error_bound(model, n, T), "n": n, "T": T, "n_samples": int(n_samples)}


def two_order_initial(modes: int = 4, scale: float = 0.5) -> ChaosExpansion:
    """Deterministic initial datum with chaos orders 1 and 2 on the first ``modes`` modes.

    Mode ``k`` (index ``k-1``) carries ``scale/k * I_1(h_{k-1})`` plus
    ``scale/k^2 * I_2(h_{k-1} (x) h_k)`` (indices taken mod ``modes``), so
    both orders are present and the target at order 2 is zero.
    """
    if modes < 2:
        raise InvalidInputError("two-order initial datum needs at least 2 modes")
    c1, c2 = [], []
    for k in range(modes):
        c1.append(ScalarKernel(1, modes, [[k]], [scale / (k + 1)]))
        c2.append(ScalarKernel.basis_tensor((k, (k + 1) % modes), modes) * (scale / (k + 1) ** 2))
    return ChaosExpansion(modes, modes, {1: Kernel(c1), 2: Kernel(c2)})
