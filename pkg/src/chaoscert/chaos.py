"""Evaluation and exact moments of multiple Wiener-Ito integrals.

At truncation ``hdim = d`` the isonormal process is a vector ``xi`` of
``d`` independent standard normals and ``I_p(f)`` is the polynomial

    sum over sorted tuples t of  orbit(t) * f(t) * prod_j He_{mult_j(t)}(xi_j)

in probabilists' Hermite polynomials.  Expansions are compiled once into a
:class:`MonomialTable` (distinct Hermite monomials plus a sparse weight
matrix onto output coordinates); the Malliavin derivative is the gradient
of that polynomial and is compiled into a second table of the same kind.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import _backend
from .exceptions import InvalidInputError, TruncationMismatchError
from .hilbert import OperatorMatrix, Truncation
from .sampling import shard_rng
from .tensors import (ChaosExpansion, Kernel, ScalarKernel, _encode, contract,
                      orbit_sizes, run_lengths, symmetrize)

MAX_CHUNK_FLOATS = 1 << 23


@dataclass(frozen=True)
class GaussianSample:
    """Realization(s) of ``W(h_1), ..., W(h_d)``; ``xi`` has shape ``(d,)`` or ``(n, d)``."""

    xi: np.ndarray
    lineage: tuple = ()

    @property
    def hdim(self) -> int:
        return self.xi.shape[-1]


def sample_isonormal(trunc, rng, n: int | None = None) -> GaussianSample:
    """Draw standard normal coordinates.

    Parameters
    ----------
    trunc : Truncation or int
        Supplies ``hdim``.
    rng : int or numpy Generator
        An integer is taken as a seed for shard 0 of the Philox stream.
    n : int, optional
        Number of draws; omitted for a single ``(d,)`` sample.
    """
    d = trunc.hdim if isinstance(trunc, Truncation) else int(trunc)
    lineage = ()
    if not isinstance(rng, np.random.Generator):
        lineage = ("philox", int(rng), 0)
        rng = shard_rng(int(rng), 0)
    shape = (d,) if n is None else (int(n), d)
    return GaussianSample(rng.standard_normal(shape), lineage)


def _xi_array(xi, hdim: int) -> tuple[np.ndarray, bool]:
    if isinstance(xi, GaussianSample):
        xi = xi.xi
    a = np.asarray(xi, dtype=float)
    single = a.ndim == 1
    a = np.ascontiguousarray(a.reshape(1, -1) if single else a)
    if a.ndim != 2 or a.shape[1] != hdim:
        raise TruncationMismatchError(f"sample has length {a.shape[-1]}, expected hdim {hdim}")
    return a, single


# ---------------------------------------------------------------------------
# monomial tables


@dataclass(frozen=True)
class MonomialTable:
    """Distinct Hermite monomials and their weights on ``n_out`` outputs.

    Row ``t`` of ``idx``/``mult`` lists coordinates and degrees of monomial
    ``t`` (zero degree entries are padding); ``weights`` is a sparse
    ``(T, n_out)`` matrix.
    """

    hdim: int
    n_out: int
    idx: np.ndarray
    mult: np.ndarray
    max_deg: int
    weights: sp.csr_matrix

    @property
    def size(self) -> int:
        return self.idx.shape[0]

    def monomials(self, xi: np.ndarray, backend=None) -> np.ndarray:
        return _backend.eval_monomials(xi, self.idx, self.mult, self.max_deg, backend=backend)

    def evaluate(self, xi: np.ndarray, backend=None) -> np.ndarray:
        """Outputs for a ``(n, hdim)`` array of samples, chunked to bound memory."""
        n = xi.shape[0]
        out = np.zeros((n, self.n_out))
        if self.size == 0 or n == 0:
            return out
        per = max(self.size, self.hdim * (self.max_deg + 1))
        step = max(1, MAX_CHUNK_FLOATS // per)
        Wt = self.weights.T.tocsr()
        for a in range(0, n, step):
            M = self.monomials(xi[a:a + step], backend)
            out[a:a + step] = (Wt @ M.T).T
        return out


def _monomial_rows(sorted_rows: np.ndarray, P: int):
    """Convert sorted index rows to padded (coordinate, degree) rows."""
    M, r = sorted_rows.shape
    idx = np.zeros((M, P), dtype=np.int64)
    mult = np.zeros((M, P), dtype=np.int64)
    if r == 0 or M == 0:
        return idx, mult
    rl = run_lengths(sorted_rows)
    ends = np.ones((M, r), dtype=bool)
    ends[:, :-1] = sorted_rows[:, 1:] != sorted_rows[:, :-1]
    col = np.cumsum(ends, axis=1) - 1
    rr, cc = np.nonzero(ends)
    idx[rr, col[rr, cc]] = sorted_rows[rr, cc]
    mult[rr, col[rr, cc]] = rl[rr, cc]
    return idx, mult


def build_table(F: ChaosExpansion, order_weights=(None,)) -> MonomialTable:
    """Compile ``F`` into a monomial table.

    ``order_weights`` is a sequence of callables ``r -> scale`` (``None``
    meaning 1); output block ``b`` holds ``sum_r scale_b(r) I_r(f_r)`` in
    columns ``b*Hdim .. (b+1)*Hdim - 1``.
    """
    m = F.Hdim
    B = len(order_weights)
    P = max(F.max_order, 1)
    all_idx, all_mult, rows, cols, vals = [], [], [], [], []
    offset = 0
    for r in F.orders:
        K = F.kernels[r]
        comps = [(i, c) for i, c in enumerate(K.components) if c.nnz]
        if not comps:
            continue
        index = np.concatenate([c.index for _, c in comps])
        weight = np.concatenate([c.values * c.orbits for _, c in comps])
        comp = np.concatenate([np.full(c.nnz, i) for i, c in comps])
        codes = _encode(index, F.hdim)
        uniq, first, inv = np.unique(codes, return_index=True, return_inverse=True)
        idx, mult = _monomial_rows(index[first], P)
        all_idx.append(idx)
        all_mult.append(mult)
        for b, fn in enumerate(order_weights):
            s = 1.0 if fn is None else float(fn(r))
            rows.append(offset + inv)
            cols.append(b * m + comp)
            vals.append(s * weight)
        offset += uniq.size
    if offset == 0:
        return MonomialTable(F.hdim, B * m, np.zeros((0, P), np.int64), np.zeros((0, P), np.int64),
                             0, sp.csr_matrix((0, B * m)))
    W = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(offset, B * m))
    return MonomialTable(F.hdim, B * m, np.concatenate(all_idx), np.concatenate(all_mult),
                         F.max_order, W)


def derivative_table(table: MonomialTable) -> MonomialTable:
    """Gradient table: output column ``k * n_out + o`` is ``d out_o / d xi_k``.

    Uses ``He_n' = n He_{n-1}``, which at the level of chaos kernels is the
    slice rule ``D I_r(f) = r I_{r-1}(f(k, ...))``.
    """
    d, n_out = table.hdim, table.n_out
    T, P = table.idx.shape
    t_src, k_pos = np.nonzero(table.mult > 0)
    if t_src.size == 0:
        return MonomialTable(d, d * n_out, np.zeros((0, P), np.int64), np.zeros((0, P), np.int64),
                             0, sp.csr_matrix((0, d * n_out)))
    coord = table.idx[t_src, k_pos]
    mu = table.mult[t_src, k_pos]
    new_mult = table.mult[t_src].copy()
    new_mult[np.arange(t_src.size), k_pos] -= 1
    new_idx = np.where(new_mult > 0, table.idx[t_src], 0)
    order = np.argsort(new_mult == 0, axis=1, kind="stable")
    new_idx = np.take_along_axis(new_idx, order, axis=1)
    new_mult = np.take_along_axis(new_mult, order, axis=1)
    keys, first, inv = np.unique(np.hstack([new_idx, new_mult]), axis=0,
                                 return_index=True, return_inverse=True)
    inv = inv.reshape(-1)
    W = table.weights.tocsr()
    counts = np.diff(W.indptr)[t_src]
    e_rows = np.repeat(np.arange(t_src.size), counts)
    starts = np.repeat(W.indptr[t_src], counts)
    offs = np.arange(e_rows.size) - np.repeat(np.cumsum(counts) - counts, counts)
    pos = starts + offs
    cols = coord[e_rows] * n_out + W.indices[pos]
    vals = mu[e_rows] * W.data[pos]
    Wd = sp.csr_matrix((vals, (inv[e_rows], cols)), shape=(keys.shape[0], d * n_out))
    Wd.sum_duplicates()
    return MonomialTable(d, d * n_out, np.ascontiguousarray(new_idx[first]),
                         np.ascontiguousarray(new_mult[first]), max(table.max_deg - 1, 0), Wd)


def _cached(F: ChaosExpansion, key, builder):
    cache = F.__dict__.setdefault("_chaos_cache", {})
    if key not in cache:
        cache[key] = builder()
    return cache[key]


def value_table(F: ChaosExpansion) -> MonomialTable:
    return _cached(F, "value", lambda: build_table(F))


def gamma_tables(F: ChaosExpansion) -> MonomialTable:
    """Derivative table of ``(F, -L^{-1} F)`` stacked as two output blocks."""
    return _cached(F, "gamma", lambda: derivative_table(
        build_table(F, (None, lambda r: 1.0 / r))))


# ---------------------------------------------------------------------------
# evaluation


def _as_expansion(f) -> ChaosExpansion:
    if isinstance(f, ChaosExpansion):
        return f
    if isinstance(f, Kernel):
        return ChaosExpansion.single(f)
    if isinstance(f, ScalarKernel):
        if f.order == 0:
            raise InvalidInputError("order-0 kernels are constants, not chaos variables")
        return ChaosExpansion.single(Kernel([f]))
    raise InvalidInputError(f"cannot interpret {type(f).__name__} as a chaos expansion")


def eval_multiple_integral(f: ScalarKernel, xi, backend=None):
    """``I_p(f)`` at one sample (returns float) or a batch (returns ``(n,)``)."""
    if f.order == 0:
        a, single = _xi_array(xi, f.hdim)
        v = float(f.values.sum())
        return v if single else np.full(a.shape[0], v)
    F = _as_expansion(f)
    a, single = _xi_array(xi, F.hdim)
    out = value_table(F).evaluate(a, backend)[:, 0]
    return float(out[0]) if single else out


def eval_expansion(F: ChaosExpansion, xi, backend=None) -> np.ndarray:
    """``F`` at one sample (shape ``(Hdim,)``) or a batch (``(n, Hdim)``)."""
    a, single = _xi_array(xi, F.hdim)
    out = value_table(F).evaluate(a, backend)
    return out[0] if single else out


def malliavin_derivative_eval(F: ChaosExpansion, xi, backend=None) -> np.ndarray:
    """``D_M F`` as a ``(hdim, Hdim)`` matrix, or ``(n, hdim, Hdim)`` for a batch."""
    a, single = _xi_array(xi, F.hdim)
    tab = _cached(F, "deriv", lambda: derivative_table(value_table(F)))
    out = tab.evaluate(a, backend).reshape(a.shape[0], F.hdim, F.Hdim)
    return out[0] if single else out


def derivative_pair(F: ChaosExpansion, xi, backend=None):
    """``(D_M F, D_M(-L^{-1} F))`` for a batch, each ``(n, hdim, Hdim)``."""
    a, _ = _xi_array(xi, F.hdim)
    out = gamma_tables(F).evaluate(a, backend).reshape(a.shape[0], F.hdim, 2, F.Hdim)
    return out[:, :, 0, :], out[:, :, 1, :]


def carre_du_champ(DF: np.ndarray, DG: np.ndarray) -> np.ndarray:
    """``Gamma[s, i, j] = sum_k DF[s, k, i] DG[s, k, j]``."""
    return np.einsum("ski,skj->sij", DF, DG)


def gamma_sample(F: ChaosExpansion, xi, G: ChaosExpansion | None = None, backend=None):
    """Carre du champ realizations.

    With ``G`` omitted this is ``Gamma(F, -L^{-1} F)``; otherwise
    ``Gamma(F, G) = <D_M F, D_M G>``.  A single sample returns an
    :class:`OperatorMatrix`, a batch an ``(n, Hdim, Hdim)`` array.
    """
    a, single = _xi_array(xi, F.hdim)
    if G is None:
        A, B = derivative_pair(F, a, backend)
    else:
        if (G.hdim, G.Hdim) != (F.hdim, F.Hdim):
            raise TruncationMismatchError("Gamma(F, G) needs a common truncation")
        A = malliavin_derivative_eval(F, a, backend)
        B = malliavin_derivative_eval(G, a, backend)
    out = carre_du_champ(A, B)
    return OperatorMatrix(out[0]) if single else out


def generator(F: ChaosExpansion) -> ChaosExpansion:
    """``L F = -sum_r r I_r(f_r)``."""
    return F.scaled_by_order(lambda r: -float(r))


def inverse_generator(F: ChaosExpansion) -> ChaosExpansion:
    """``L^{-1} F = -sum_r (1/r) I_r(f_r)`` on centered ``F``."""
    return F.scaled_by_order(lambda r: -1.0 / r)


# ---------------------------------------------------------------------------
# exact moments


def _order_gram(K: Kernel) -> np.ndarray:
    """``G[i, j] = <f_i, f_j>`` over ordered tuples."""
    m = K.Hdim
    comps = [(i, c) for i, c in enumerate(K.components) if c.nnz]
    if not comps:
        return np.zeros((m, m))
    index = np.concatenate([c.index for _, c in comps])
    vals = np.concatenate([c.values * np.sqrt(c.orbits) for _, c in comps])
    comp = np.concatenate([np.full(c.nnz, i) for i, c in comps])
    uniq, inv = np.unique(_encode(index, K.hdim), return_inverse=True)
    X = sp.csr_matrix((vals, (comp, inv)), shape=(m, uniq.size))
    G = (X @ X.T).toarray()
    return 0.5 * (G + G.T)


def order_covariances(F: ChaosExpansion) -> dict[int, np.ndarray]:
    """Per-order covariance matrices ``r! <f_{r,i}, f_{r,j}>``."""
    def build():
        return {r: math.factorial(r) * _order_gram(K) for r, K in F.kernels.items()}
    return _cached(F, "order_cov", build)


def exact_covariance(F: ChaosExpansion) -> OperatorMatrix:
    """Covariance operator of ``F`` via the isometry and orthogonality of chaoses."""
    total = np.zeros((F.Hdim, F.Hdim))
    for r in F.orders:
        total = total + order_covariances(F)[r]
    return OperatorMatrix(total, symmetric=True)


def exact_fourth_excess(f: ScalarKernel) -> float:
    """``E I_p(f)^4 - 3 (E I_p(f)^2)^2`` from contraction norms."""
    p = f.order
    if p <= 1 or f.is_zero():
        return 0.0
    total = 0.0
    pf2 = math.factorial(p) ** 2
    for r in range(1, p):
        c = contract(f, f, r)
        a = c.norm() ** 2
        b = symmetrize(c).norm() ** 2
        total += pf2 * math.comb(p, r) ** 2 * (a + math.comb(2 * p - 2 * r, p - r) * b)
    return float(total)


def exact_fourth_moment(f: ScalarKernel) -> float:
    """``E I_p(f)^4``."""
    var = math.factorial(f.order) * f.norm() ** 2
    return exact_fourth_excess(f) + 3.0 * var * var


def dirichlet_energy(F: ChaosExpansion) -> float:
    """``-E<L F, F> = sum_r r r! ||f_r||^2``, the mean trace of ``Gamma(F, F)``."""
    return float(sum(r * np.trace(c) for r, c in order_covariances(F).items()))


def mc_batch(F: ChaosExpansion):
    """Statistic factory: draw ``k`` samples and return ``F`` at them."""
    def stat(rng, k):
        return eval_expansion(F, rng.standard_normal((k, F.hdim)))
    return stat
