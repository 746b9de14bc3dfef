"""Sample-side estimators: d2 lower bounds, Stein gaps, moments, polarization.

The d2 lower bound uses cosine test functions

    h_{a,b}(x) = cos(<x, a> + b) / (1 + |a| + |a|^2),

whose sup norm, gradient norm and Hessian norm are bounded by ``A``,
``A|a|`` and ``A|a|^2`` with ``A = 1/(1 + |a| + |a|^2)``, so every
dictionary entry lies in the unit ball of the d2 test class.  Gaussian
expectations are available in closed form:
``E cos(<a, Z> + b) = exp(-a^T C a / 2) cos(<a, mu> + b)``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .chaos import derivative_pair, carre_du_champ, eval_expansion
from .exceptions import InvalidInputError, TruncationMismatchError
from .hilbert import OperatorMatrix, as_array, batched_trace_norm, is_psd
from .sampling import (DEFAULT_CHUNK, SIGMA_CONVENTION, Moments, run_mc, delta_stderr,
                       shard_rng, shard_sizes, tree_reduce, RNG_ALGORITHM)
from .tensors import ChaosExpansion

DEFAULT_RADII = (0.25, 0.5, 1.0, 2.0)
DEFAULT_PHASES = (0.0, math.pi / 2)


@dataclass(frozen=True)
class TestFunctionDictionary:
    """Finite family of admissible cosine test functions on ``R^m``.

    Entry ``k`` is ``scale[k] * cos(<x, directions[k]> + phases[k])``.
    """

    __test__ = False  # not a pytest class

    directions: np.ndarray
    phases: np.ndarray
    normalization: str = "1/(1+|a|+|a|^2)"

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.directions, dtype=float))
        b = np.asarray(self.phases, dtype=float).reshape(-1)
        if A.shape[0] != b.shape[0] or A.shape[0] == 0:
            raise InvalidInputError("dictionary needs matching, nonempty directions and phases")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            raise InvalidInputError("dictionary entries must be finite")
        object.__setattr__(self, "directions", A)
        object.__setattr__(self, "phases", b)
        budget = self.scales * (1.0 + self.norms + self.norms ** 2)
        if np.any(budget > 1.0 + 1e-12):
            raise InvalidInputError("dictionary entry exceeds the admissibility budget")

    @property
    def dim(self) -> int:
        return self.directions.shape[1]

    @property
    def size(self) -> int:
        return self.directions.shape[0]

    @property
    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.directions, axis=1)

    @property
    def scales(self) -> np.ndarray:
        a = self.norms
        return 1.0 / (1.0 + a + a * a)

    def derivative_bounds(self) -> np.ndarray:
        """Rows ``(sup|h|, sup|Dh|, sup|D^2 h|)`` per entry."""
        a, s = self.norms, self.scales
        return np.stack([s, s * a, s * a * a], axis=1)

    def evaluate(self, X: np.ndarray) -> np.ndarray:
        """``(n, size)`` array of ``h_k(X_s)``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.dim:
            raise TruncationMismatchError(f"samples have dimension {X.shape[1]}, dictionary {self.dim}")
        return np.cos(X @ self.directions.T + self.phases) * self.scales

    def gaussian_expectation(self, cov, mean=None) -> np.ndarray:
        """Exact ``E h_k(Z)`` for ``Z ~ N(mean, cov)``."""
        C = as_array(cov)
        q = np.einsum("kj,jl,kl->k", self.directions, C, self.directions)
        shift = 0.0 if mean is None else self.directions @ np.asarray(mean, dtype=float)
        return self.scales * np.exp(-0.5 * q) * np.cos(shift + self.phases)

    def restrict(self, entries) -> "TestFunctionDictionary":
        entries = np.asarray(entries, dtype=np.int64)
        return TestFunctionDictionary(self.directions[entries], self.phases[entries], self.normalization)


def default_dictionary(m: int, seed: int = 0, n_random: int = 16, radii=DEFAULT_RADII,
                       phases=DEFAULT_PHASES) -> TestFunctionDictionary:
    """Directions ``rho * v`` over basis vectors and seeded random unit vectors."""
    if m < 1:
        raise InvalidInputError("dimension must be >= 1")
    rng = shard_rng(seed, 0, stream=7)
    R = rng.standard_normal((n_random, m))
    R /= np.linalg.norm(R, axis=1, keepdims=True)
    V = np.vstack([np.eye(m), R])
    dirs, ph = [], []
    for v in V:
        for rho in radii:
            for b in phases:
                dirs.append(rho * v)
                ph.append(b)
    return TestFunctionDictionary(np.array(dirs), np.array(ph))


def directions_dictionary(vectors, radii=DEFAULT_RADII, phases=DEFAULT_PHASES):
    """Dictionary over caller-chosen directions (each scaled by every radius)."""
    dirs, ph = [], []
    for v in np.atleast_2d(np.asarray(vectors, dtype=float)):
        for rho in radii:
            for b in phases:
                dirs.append(rho * v)
                ph.append(b)
    return TestFunctionDictionary(np.array(dirs), np.array(ph))


# ---------------------------------------------------------------------------
# d2 lower bound


@dataclass
class D2Estimate:
    """Dictionary lower bound on d2 with the error bar of the selected entry."""

    value: float
    stderr: float
    argmax_entry: int
    dictionary_size: int
    holdout: bool
    gaps: np.ndarray = field(repr=False)
    selection_gaps: np.ndarray = field(repr=False, default=None)

    def report(self, **extra) -> dict:
        out = {"estimator": "d2_lower_bound", "value": float(self.value),
               "stderr": float(self.stderr), "dictionary_size": int(self.dictionary_size),
               "argmax_entry": int(self.argmax_entry), "holdout": bool(self.holdout),
               "sigma_convention": SIGMA_CONVENTION}
        out.update(extra)
        return out


class DictionaryAccumulator:
    """Streaming means of dictionary values for two sample families.

    Each family has two halves so that the maximizing entry can be chosen
    on one half and evaluated on the other.  A family may instead be given
    exact expectations (zero error) via :meth:`set_exact`.
    """

    def __init__(self, dictionary: TestFunctionDictionary):
        self.dictionary = dictionary
        self.mom = {(s, h): [] for s in "FZ" for h in (0, 1)}
        self.exact = {}

    def add(self, side: str, X: np.ndarray, half: int = 0):
        vals = self.dictionary.evaluate(X)
        self.mom[(side, half)].append(Moments.from_batch(vals))

    def set_exact(self, side: str, expectations):
        self.exact[side] = np.asarray(expectations, dtype=float)

    def stats(self, side, halves):
        if side in self.exact:
            return self.exact[side], np.zeros(self.dictionary.size)
        parts = [m for h in halves for m in self.mom[(side, h)]]
        if not parts:
            raise InvalidInputError(f"no samples recorded for {side}")
        mom = tree_reduce(parts)
        return mom.mean, mom.stderr

    def estimate(self, holdout: bool) -> D2Estimate:
        size = self.dictionary.size
        if holdout:
            mF0, _ = self.stats("F", [0])
            mZ0, _ = self.stats("Z", [0])
            sel = np.abs(mF0 - mZ0)
            k = int(np.argmax(sel))
            mF, sF = self.stats("F", [1])
            mZ, sZ = self.stats("Z", [1])
        else:
            sel = None
            mF, sF = self.stats("F", [0, 1])
            mZ, sZ = self.stats("Z", [0, 1])
        gaps = np.abs(mF - mZ)
        if not holdout:
            k = int(np.argmax(gaps))
        se = float(np.hypot(sF[k], sZ[k]))
        return D2Estimate(float(gaps[k]), se, k, size, holdout, gaps, sel)


def _split_halves(X):
    n = X.shape[0]
    return X[: (n + 1) // 2], X[(n + 1) // 2:]


def d2_lower_bound(samples_F, samples_Z, dictionary: TestFunctionDictionary,
                   holdout: bool = False) -> D2Estimate:
    """Lower bound ``max_k |mean h_k(F) - mean h_k(Z)|`` on d2.

    Parameters
    ----------
    samples_F : (n, m) array
    samples_Z : (n', m) array or OperatorMatrix
        Samples of the reference law, or the covariance of a centered
        Gaussian whose expectations are then used in closed form.
    holdout : bool
        Pick the maximizing entry on the first half of the samples and
        report its gap on the second half, which removes the upward bias
        of the maximum over many noisy entries.
    """
    XF = np.atleast_2d(np.asarray(samples_F, dtype=float))
    if XF.shape[0] == 0 or XF.size == 0:
        raise InvalidInputError("empty sample set")
    acc = DictionaryAccumulator(dictionary)
    if isinstance(samples_Z, OperatorMatrix):
        acc.set_exact("Z", dictionary.gaussian_expectation(samples_Z))
    else:
        XZ = np.atleast_2d(np.asarray(samples_Z, dtype=float))
        if XZ.shape[0] == 0 or XZ.size == 0:
            raise InvalidInputError("empty sample set")
        if holdout and XZ.shape[0] < 2:
            raise InvalidInputError("holdout needs at least two samples per family")
        for h, part in enumerate(_split_halves(XZ) if holdout else (XZ,)):
            acc.add("Z", part, h)
    if holdout and XF.shape[0] < 2:
        raise InvalidInputError("holdout needs at least two samples per family")
    for h, part in enumerate(_split_halves(XF) if holdout else (XF,)):
        acc.add("F", part, h)
    return acc.estimate(holdout)


def sample_gaussian(cov, n: int, rng) -> np.ndarray:
    """``n`` draws of ``N(0, cov)`` by spectral factorization (eigenvalues floored at 0)."""
    C = as_array(cov)
    w, V = np.linalg.eigh(0.5 * (C + C.T))
    L = V * np.sqrt(np.maximum(w, 0.0))
    if not isinstance(rng, np.random.Generator):
        rng = shard_rng(int(rng), 0)
    return rng.standard_normal((int(n), C.shape[0])) @ L.T


# ---------------------------------------------------------------------------
# Stein gap and moments


def stein_gap_samples(F: ChaosExpansion, T_Z: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """Per-sample ``(1/2) ||Gamma(F, -L^{-1}F) - T_Z||_S1``."""
    A, B = derivative_pair(F, xi)
    G = carre_du_champ(A, B) - T_Z
    return 0.5 * batched_trace_norm(G)


def mc_stein_gap(F: ChaosExpansion, T_Z, n_samples: int, seed: int = 0, shards: int = 1,
                 chunk: int = DEFAULT_CHUNK):
    """Monte-Carlo estimate of ``(1/2) E ||Gamma(F, -L^{-1}F) - T_Z||_S1``.

    Returns
    -------
    (value, stderr, MCResult)
    """
    T = as_array(T_Z)
    if T.shape[0] != F.Hdim:
        raise TruncationMismatchError(f"target dimension {T.shape[0]} differs from Hdim {F.Hdim}")

    def stat(rng, k):
        return stein_gap_samples(F, T, rng.standard_normal((k, F.hdim)))[:, None]

    res = run_mc(stat, n_samples, seed, shards, estimator="mc_stein_gap", chunk=chunk)
    return float(res.value[0]), float(res.stderr[0]), res


@dataclass
class MomentEstimate:
    second: np.ndarray
    second_se: np.ndarray
    fourth: np.ndarray
    fourth_se: np.ndarray
    excess: np.ndarray
    excess_se: np.ndarray
    covariance: np.ndarray
    covariance_se: np.ndarray
    result: object = field(repr=False, default=None)


def mc_moments(F: ChaosExpansion, n_samples: int, seed: int = 0, shards: int = 1,
               chunk: int = DEFAULT_CHUNK) -> MomentEstimate:
    """Sample second and fourth moments of each coordinate plus the covariance.

    The coordinate excess ``E X^4 - 3 (E X^2)^2`` carries a delta-method
    error bar from the joint co-moments of ``(X^2, X^4)``.
    """
    m = F.Hdim
    iu = np.triu_indices(m)

    def stat(rng, k):
        X = eval_expansion(F, rng.standard_normal((k, F.hdim)))
        X2 = X * X
        return np.hstack([X2, X2 * X2, (X[:, :, None] * X[:, None, :])[:, iu[0], iu[1]]])

    res = run_mc(stat, n_samples, seed, shards, estimator="mc_moments", full=True, chunk=chunk)
    mu, se = res.value, res.stderr
    cov_mean = res.moments.mean_cov
    s2, s4 = mu[:m], mu[m:2 * m]
    excess = s4 - 3 * s2 ** 2
    ex_se = np.empty(m)
    for i in range(m):
        g = np.zeros(mu.size)
        g[i] = -6 * s2[i]
        g[m + i] = 1.0
        ex_se[i] = delta_stderr(g, cov_mean)
    C = np.zeros((m, m))
    Cse = np.zeros((m, m))
    C[iu] = mu[2 * m:]
    Cse[iu] = se[2 * m:]
    C = C + np.triu(C, 1).T
    Cse = Cse + np.triu(Cse, 1).T
    return MomentEstimate(s2, se[:m], s4, se[m:2 * m], excess, ex_se, C, Cse, res)


# ---------------------------------------------------------------------------
# polarization


def polarized_weak_moment(quartic, x1, x2, x3, x4) -> float:
    """Symmetric four-linear form recovered from its diagonal ``R(u)``.

    Alternating sum over the 15 nonempty subsets ``S`` of the four
    vectors: ``(1/4!) sum_S (-1)^(4-|S|) R(sum_{j in S} x_j)``.
    """
    xs = [np.asarray(x, dtype=float) for x in (x1, x2, x3, x4)]
    total = 0.0
    for r in range(1, 5):
        sign = (-1) ** (4 - r)
        for S in itertools.combinations(range(4), r):
            u = xs[S[0]].copy()
            for j in S[1:]:
                u = u + xs[j]
            total += sign * float(quartic(u))
    return total / 24.0


def gaussian_quartic(cov):
    """``u -> E<X, u>^4 = 3 (u^T C u)^2`` for ``X ~ N(0, C)``."""
    C = as_array(cov)
    return lambda u: 3.0 * float(u @ C @ u) ** 2


def wick_fourth_moment(cov, x1, x2, x3, x4) -> float:
    """Isserlis formula for ``E prod_i <X, x_i>`` with ``X ~ N(0, C)``."""
    C = as_array(cov)
    xs = [np.asarray(x, dtype=float) for x in (x1, x2, x3, x4)]
    c = lambda a, b: float(xs[a] @ C @ xs[b])
    return c(0, 1) * c(2, 3) + c(0, 2) * c(1, 3) + c(0, 3) * c(1, 2)


# ---------------------------------------------------------------------------
# sandwich


@dataclass
class SandwichResult:
    d2: D2Estimate
    stein: float
    stein_se: float
    certificate: float
    sigma: float
    n_samples: int
    seed: int
    shards: int
    reran: bool = False

    @property
    def stein_ok(self) -> bool:
        return self.d2.value - self.sigma * self.d2.stderr <= self.stein + self.sigma * self.stein_se

    @property
    def certificate_ok(self) -> bool:
        return self.d2.value - self.sigma * self.d2.stderr <= self.certificate

    @property
    def passed(self) -> bool:
        return self.stein_ok and self.certificate_ok

    def report(self) -> dict:
        return {"d2_lower": self.d2.report(), "stein_mc": {"estimator": "mc_stein_gap",
                "value": self.stein, "stderr": self.stein_se},
                "certificate": self.certificate, "sigma": self.sigma,
                "n_samples": self.n_samples, "seed": self.seed, "shards": self.shards,
                "rng": RNG_ALGORITHM, "sigma_convention": SIGMA_CONVENTION,
                "stein_ok": self.stein_ok, "certificate_ok": self.certificate_ok,
                "reran_with_4x_samples": self.reran, "pass": self.passed}


def _sandwich_once(F, T, certificate, n_samples, seed, shards, dictionary, sigma, chunk,
                   exact_target):
    acc = DictionaryAccumulator(dictionary)
    if exact_target:
        acc.set_exact("Z", dictionary.gaussian_expectation(T))
    stein_parts = []
    w, V = np.linalg.eigh(T)
    L = V * np.sqrt(np.maximum(w, 0.0))
    for shard, size in enumerate(shard_sizes(n_samples, shards)):
        rng_f = shard_rng(seed, shard, stream=1)
        rng_z = shard_rng(seed, shard, stream=2)
        halves = ((size + 1) // 2, size // 2)
        for h, nh in enumerate(halves):
            left = nh
            while left > 0:
                k = min(chunk, left)
                xi = rng_f.standard_normal((k, F.hdim))
                acc.add("F", eval_expansion(F, xi), h)
                A, B = derivative_pair(F, xi)
                st = 0.5 * batched_trace_norm(carre_du_champ(A, B) - T)
                stein_parts.append(Moments.from_batch(st[:, None]))
                if not exact_target:
                    acc.add("Z", rng_z.standard_normal((k, T.shape[0])) @ L.T, h)
                left -= k
    d2 = acc.estimate(holdout=True)
    mom = tree_reduce(stein_parts)
    return SandwichResult(d2, float(mom.mean[0]), float(mom.stderr[0]), float(certificate),
                          sigma, n_samples, seed, shards)


def run_sandwich(F: ChaosExpansion, T_Z, certificate: float, n_samples: int, seed: int = 0,
                 shards: int = 1, dictionary: TestFunctionDictionary | None = None,
                 sigma: float = 3.0, chunk: int = DEFAULT_CHUNK, exact_target: bool = False,
                 rerun: bool = True) -> SandwichResult:
    """Check ``d2_lower - s*se <= stein + s*se`` and ``d2_lower - s*se <= certificate``.

    Samples of ``F`` drive both the dictionary estimate and the Stein
    gap; the target side is sampled from an independent stream (or taken
    in closed form with ``exact_target``).  The maximizing dictionary
    entry is selected on one half of the samples and evaluated on the
    other.  A failing run is repeated once with four times the samples
    before the failure is reported.
    """
    T = np.asarray(as_array(T_Z), dtype=float)
    if T.shape[0] != F.Hdim:
        raise TruncationMismatchError(f"target dimension {T.shape[0]} differs from Hdim {F.Hdim}")
    if not is_psd(T):
        raise InvalidInputError("target covariance must be symmetric PSD")
    if n_samples < 4:
        raise InvalidInputError("sandwich runs need at least 4 samples")
    dictionary = dictionary or default_dictionary(F.Hdim, seed)
    res = _sandwich_once(F, T, certificate, n_samples, seed, shards, dictionary, sigma, chunk,
                         exact_target)
    if not res.passed and rerun:
        res = _sandwich_once(F, T, certificate, 4 * n_samples, seed, shards, dictionary, sigma,
                             chunk, exact_target)
        res.reran = True
    return res
