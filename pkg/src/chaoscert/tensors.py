"""Symmetric tensor kernels at finite truncation.

A :class:`ScalarKernel` of order ``p`` over ``hdim`` isonormal coordinates
is stored sparsely: one row per *sorted* index tuple, holding the common
coefficient of every ordered tuple in its permutation orbit.  A
:class:`CooTensor` holds raw, not necessarily symmetric, tensors in
ordered coordinate form; contractions produce these.

A :class:`Kernel` is an ``Hdim``-tuple of scalar kernels (its components
along the state-space basis) and a :class:`ChaosExpansion` maps chaos
orders to kernels.  Indices are zero-based throughout, including the JSON
file formats.
"""
from __future__ import annotations

import itertools
import json
import math
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .exceptions import InvalidInputError, SymmetryError, TruncationMismatchError

STRICT_ATOL = 1e-9
DENSE_FILL = 0.25
DENSE_MAX_SIZE = 1 << 20


def _as_index(index, order: int) -> np.ndarray:
    idx = np.asarray(index, dtype=np.int64)
    if idx.size == 0:
        return np.zeros((0, order), dtype=np.int64)
    return idx.reshape(-1, order)


def run_lengths(sorted_index: np.ndarray) -> np.ndarray:
    """Position-wise run counters of sorted rows.

    ``out[t, k]`` is the 1-based position of column ``k`` within its run of
    equal indices, so ``prod(out[t])`` equals ``prod_j mult_j!``.
    """
    M, p = sorted_index.shape
    out = np.ones((M, p), dtype=np.int64)
    for k in range(1, p):
        same = sorted_index[:, k] == sorted_index[:, k - 1]
        out[:, k] = np.where(same, out[:, k - 1] + 1, 1)
    return out


def orbit_sizes(sorted_index: np.ndarray) -> np.ndarray:
    """Number of distinct orderings of each sorted tuple, ``p!/prod mult!``."""
    M, p = sorted_index.shape
    if p == 0:
        return np.ones(M)
    return math.factorial(p) / np.prod(run_lengths(sorted_index), axis=1).astype(float)


def _encode(coords: np.ndarray, hdim: int) -> np.ndarray:
    """Row-major linear code of index tuples (int64)."""
    k = coords.shape[1]
    if k == 0:
        return np.zeros(coords.shape[0], dtype=np.int64)
    if hdim ** k >= 2 ** 62:
        raise InvalidInputError("tensor too large for linear index encoding")
    return np.ravel_multi_index(coords.T, (hdim,) * k).astype(np.int64)


def _decode(codes: np.ndarray, hdim: int, k: int) -> np.ndarray:
    if k == 0:
        return np.zeros((codes.shape[0], 0), dtype=np.int64)
    return np.stack(np.unravel_index(codes, (hdim,) * k), axis=1).astype(np.int64)


class CooTensor:
    """Raw order-``k`` tensor in ordered coordinate form (unique coordinates).

    Order 0 is a scalar: at most one entry with an empty coordinate tuple.
    """

    __slots__ = ("order", "hdim", "coords", "values")

    def __init__(self, order: int, hdim: int, coords, values, *, _canonical=False):
        self.order = int(order)
        self.hdim = int(hdim)
        coords = _as_index(coords, self.order)
        values = np.asarray(values, dtype=float).reshape(-1)
        if not _canonical and coords.shape[0]:
            codes = _encode(coords, self.hdim)
            uniq, inv = np.unique(codes, return_inverse=True)
            summed = np.zeros(uniq.shape[0])
            np.add.at(summed, inv, values)
            keep = summed != 0
            coords = _decode(uniq[keep], self.hdim, self.order)
            values = summed[keep]
        self.coords = coords
        self.values = values

    @classmethod
    def from_dense(cls, arr) -> "CooTensor":
        a = np.asarray(arr, dtype=float)
        if a.ndim == 0:
            v = float(a)
            return cls(0, 1, np.zeros((1 if v else 0, 0)), [v] if v else [], _canonical=True)
        nz = np.nonzero(a)
        coords = np.stack(nz, axis=1).astype(np.int64)
        return cls(a.ndim, a.shape[0], coords, a[nz], _canonical=True)

    def to_dense(self) -> np.ndarray:
        if self.order == 0:
            return np.asarray(self.scalar())
        out = np.zeros((self.hdim,) * self.order)
        if self.values.size:
            out[tuple(self.coords.T)] = self.values
        return out

    def scalar(self) -> float:
        if self.order != 0:
            raise InvalidInputError("scalar() only applies to order-0 tensors")
        return float(self.values.sum())

    def norm(self) -> float:
        return float(np.sqrt(np.sum(self.values ** 2)))

    def inner(self, other: "CooTensor") -> float:
        if (self.order, self.hdim) != (other.order, other.hdim) and self.order:
            raise TruncationMismatchError("tensor shapes differ")
        if self.order == 0:
            return self.scalar() * other.scalar()
        a = _encode(self.coords, self.hdim)
        b = _encode(other.coords, other.hdim)
        common, ia, ib = np.intersect1d(a, b, assume_unique=True, return_indices=True)
        return float(np.dot(self.values[ia], other.values[ib]))

    def symmetrized(self) -> "ScalarKernel":
        """Average over argument permutations."""
        return symmetrize(self)

    def __repr__(self):
        return f"CooTensor(order={self.order}, hdim={self.hdim}, nnz={self.values.size})"


class ScalarKernel:
    """Fully symmetric kernel of order ``p`` over ``hdim`` coordinates.

    Construct via :meth:`from_entries`, :meth:`from_dense`,
    :meth:`from_symmetric` or :func:`symmetrize`; the bare constructor
    expects canonical data (sorted unique rows).
    """

    __slots__ = ("order", "hdim", "index", "values", "__dict__")

    def __init__(self, order: int, hdim: int, index, values):
        self.order = int(order)
        self.hdim = int(hdim)
        if self.order < 0 or self.hdim < 1:
            raise InvalidInputError(f"invalid kernel shape p={order}, d={hdim}")
        self.index = _as_index(index, self.order)
        self.values = np.asarray(values, dtype=float).reshape(-1)
        if self.index.shape[0] != self.values.shape[0]:
            raise InvalidInputError("index/value length mismatch")
        if self.index.size and (self.index.min() < 0 or self.index.max() >= self.hdim):
            raise InvalidInputError("kernel index out of range")
        if not np.all(np.isfinite(self.values)):
            raise InvalidInputError("kernel has non-finite coefficients")

    # -- constructors -------------------------------------------------
    @classmethod
    def zero(cls, order: int, hdim: int) -> "ScalarKernel":
        return cls(order, hdim, np.zeros((0, order), dtype=np.int64), [])

    @classmethod
    def from_symmetric(cls, order, hdim, index, values) -> "ScalarKernel":
        """Build from orbit representatives; rows are sorted and must be unique."""
        idx = np.sort(_as_index(index, order), axis=1)
        vals = np.asarray(values, dtype=float).reshape(-1)
        if idx.shape[0]:
            codes = _encode(idx, hdim)
            order_ = np.argsort(codes, kind="stable")
            codes = codes[order_]
            if np.any(codes[1:] == codes[:-1]):
                raise InvalidInputError("duplicate orbit representatives")
            idx, vals = idx[order_], vals[order_]
            keep = vals != 0
            idx, vals = idx[keep], vals[keep]
        return cls(order, hdim, idx, vals)

    @classmethod
    def from_entries(cls, order, hdim, entries, strict: bool = False) -> "ScalarKernel":
        """Symmetrize raw ordered-tuple entries ``[(tuple, value), ...]``.

        Duplicate tuples are summed.  With ``strict`` the raw tensor must
        already be symmetric to :data:`STRICT_ATOL`.
        """
        entries = list(entries)
        coords = np.array([list(t) for t, _ in entries], dtype=np.int64).reshape(-1, order)
        vals = np.array([v for _, v in entries], dtype=float)
        return symmetrize(CooTensor(order, hdim, coords, vals), strict=strict)

    @classmethod
    def from_dense(cls, tensor, strict: bool = False) -> "ScalarKernel":
        return symmetrize(np.asarray(tensor, dtype=float), strict=strict)

    @classmethod
    def basis_tensor(cls, indices, hdim: int) -> "ScalarKernel":
        """Symmetrized ``h_{i1} (x) ... (x) h_{ip}``."""
        indices = tuple(int(i) for i in indices)
        return cls.from_entries(len(indices), hdim, [(indices, 1.0)])

    @classmethod
    def power(cls, vector, order: int) -> "ScalarKernel":
        """``v^{(x) p}`` for a vector ``v`` of length ``hdim`` (sparse in ``v``)."""
        v = np.asarray(vector, dtype=float)
        support = np.flatnonzero(v)
        rows = np.array(list(itertools.combinations_with_replacement(support, order)),
                        dtype=np.int64).reshape(-1, order)
        vals = np.prod(v[rows], axis=1) if order else np.ones(rows.shape[0])
        if order == 0:
            rows, vals = np.zeros((1, 0), dtype=np.int64), np.ones(1)
        return cls.from_symmetric(order, v.size, rows, vals)

    # -- basic properties ---------------------------------------------
    @property
    def nnz(self) -> int:
        return int(self.values.size)

    @cached_property
    def orbits(self) -> np.ndarray:
        return orbit_sizes(self.index)

    @property
    def fill_ratio(self) -> float:
        return float(np.sum(self.orbits)) / float(self.hdim) ** self.order if self.order else 1.0

    def is_zero(self) -> bool:
        return not np.any(self.values)

    def norm(self) -> float:
        return float(np.sqrt(np.sum(self.orbits * self.values ** 2)))

    def inner(self, other: "ScalarKernel") -> float:
        """``<f, g>`` over all ordered tuples."""
        _check_same(self, other)
        a = _encode(self.index, self.hdim)
        b = _encode(other.index, other.hdim)
        common, ia, ib = np.intersect1d(a, b, assume_unique=True, return_indices=True)
        return float(np.sum(self.orbits[ia] * self.values[ia] * other.values[ib]))

    def ordered(self) -> CooTensor:
        """Expand to every ordered tuple of each orbit."""
        p = self.order
        if p <= 1 or self.nnz == 0:
            return CooTensor(p, self.hdim, self.index, self.values, _canonical=True)
        perms = np.array(list(itertools.permutations(range(p))), dtype=np.int64)
        coords = self.index[:, perms].reshape(-1, p)
        vals = np.repeat(self.values, perms.shape[0])
        codes = _encode(coords, self.hdim)
        uniq, first = np.unique(codes, return_index=True)
        return CooTensor(p, self.hdim, coords[first], vals[first], _canonical=True)

    def to_dense(self) -> np.ndarray:
        return self.ordered().to_dense()

    def coefficient(self, indices) -> float:
        """Coefficient at an ordered tuple."""
        key = np.sort(np.asarray(indices, dtype=np.int64)).reshape(1, -1)
        if self.nnz == 0:
            return 0.0
        hit = np.flatnonzero(np.all(self.index == key, axis=1))
        return float(self.values[hit[0]]) if hit.size else 0.0

    def slice_first(self, k: int) -> "ScalarKernel":
        """Order ``p-1`` kernel ``f(k, ., ..., .)``."""
        if self.order == 0:
            raise InvalidInputError("cannot slice an order-0 kernel")
        rows = np.flatnonzero(np.any(self.index == k, axis=1))
        if rows.size == 0:
            return ScalarKernel.zero(self.order - 1, self.hdim)
        idx = self.index[rows]
        # drop one occurrence of k; rows are sorted so the first hit suffices
        pos = np.argmax(idx == k, axis=1)
        keep = np.ones_like(idx, dtype=bool)
        keep[np.arange(idx.shape[0]), pos] = False
        reduced = idx[keep].reshape(idx.shape[0], self.order - 1)
        return ScalarKernel.from_symmetric(self.order - 1, self.hdim, reduced, self.values[rows])

    # -- algebra ------------------------------------------------------
    def __mul__(self, c) -> "ScalarKernel":
        c = float(c)
        if c == 0:
            return ScalarKernel.zero(self.order, self.hdim)
        return ScalarKernel(self.order, self.hdim, self.index, c * self.values)

    __rmul__ = __mul__

    def __add__(self, other: "ScalarKernel") -> "ScalarKernel":
        _check_same(self, other)
        return _combine([self, other], [1.0, 1.0])

    def with_hdim(self, hdim: int, offset: int = 0) -> "ScalarKernel":
        """Relabel coordinates ``j -> j + offset`` inside a larger space."""
        if self.index.size and self.index.max() + offset >= hdim:
            raise InvalidInputError("relabelled index exceeds new hdim")
        return ScalarKernel(self.order, hdim, self.index + offset, self.values)

    def allclose(self, other: "ScalarKernel", atol: float = 1e-12) -> bool:
        if (self.order, self.hdim) != (other.order, other.hdim):
            return False
        diff = _combine([self, other], [1.0, -1.0])
        return bool(np.all(np.abs(diff.values) <= atol))

    def __repr__(self):
        return f"ScalarKernel(order={self.order}, hdim={self.hdim}, nnz={self.nnz})"


def _check_same(f, g):
    if (f.order, f.hdim) != (g.order, g.hdim):
        raise TruncationMismatchError(
            f"kernels differ: (p={f.order}, d={f.hdim}) vs (p={g.order}, d={g.hdim})")


def _combine(kernels, weights) -> ScalarKernel:
    """Linear combination of symmetric kernels of equal shape."""
    p, d = kernels[0].order, kernels[0].hdim
    idx = np.concatenate([k.index for k in kernels]) if kernels else np.zeros((0, p))
    vals = np.concatenate([w * k.values for k, w in zip(kernels, weights)])
    if idx.shape[0] == 0:
        return ScalarKernel.zero(p, d)
    codes = _encode(idx.reshape(-1, p), d)
    uniq, first, inv = np.unique(codes, return_index=True, return_inverse=True)
    summed = np.zeros(uniq.shape[0])
    np.add.at(summed, inv, vals)
    keep = summed != 0
    return ScalarKernel(p, d, idx.reshape(-1, p)[first][keep], summed[keep])


def linear_combination(kernels, weights) -> ScalarKernel:
    for k in kernels[1:]:
        _check_same(kernels[0], k)
    return _combine(list(kernels), [float(w) for w in weights])


def symmetrize(raw, strict: bool = False) -> ScalarKernel:
    """Symmetric projection ``(1/p!) sum_sigma raw(sigma(.))``.

    Parameters
    ----------
    raw : ndarray or CooTensor
        Order-``p`` coefficient tensor with finite entries.
    strict : bool
        Raise :class:`SymmetryError` instead of averaging when the input
        deviates from symmetry by more than :data:`STRICT_ATOL`.
    """
    if not isinstance(raw, CooTensor):
        arr = np.asarray(raw, dtype=float)
        if not np.all(np.isfinite(arr)):
            raise InvalidInputError("tensor has non-finite entries")
        if arr.ndim and len(set(arr.shape)) != 1:
            raise InvalidInputError("tensor must have equal axis lengths")
        raw = CooTensor.from_dense(arr)
    p, d = raw.order, raw.hdim
    if raw.values.size == 0:
        return ScalarKernel.zero(p, d)
    if p == 0:
        return ScalarKernel(0, d, np.zeros((1, 0), dtype=np.int64), [raw.scalar()])
    srt = np.sort(raw.coords, axis=1)
    codes = _encode(srt, d)
    uniq, first, inv = np.unique(codes, return_index=True, return_inverse=True)
    sums = np.zeros(uniq.shape[0])
    np.add.at(sums, inv, raw.values)
    orb = orbit_sizes(srt[first])
    means = sums / orb
    if strict:
        dev = np.abs(raw.values - means[inv])
        present = np.bincount(inv, minlength=uniq.shape[0])
        missing = (present < orb) & (np.abs(means) > STRICT_ATOL)
        if (dev.size and dev.max() > STRICT_ATOL) or np.any(missing):
            raise SymmetryError("kernel asymmetry exceeds strict tolerance")
    keep = means != 0
    return ScalarKernel(p, d, srt[first][keep], means[keep])


def _as_coo(f) -> CooTensor:
    if isinstance(f, ScalarKernel):
        return f.ordered()
    if isinstance(f, CooTensor):
        return f
    return CooTensor.from_dense(np.asarray(f, dtype=float))


def _order_hdim(f):
    return f.order, f.hdim


def contract(f, g, r: int) -> CooTensor:
    """Contraction ``f (x)_r g``.

    The last ``r`` arguments of ``f`` are paired with the first ``r``
    arguments of ``g``; the result has order ``p + q - 2r`` and is not
    symmetrized.  ``r = 0`` gives the tensor product and ``r = p = q``
    the scalar inner product (an order-0 tensor).
    """
    p, d = _order_hdim(f)
    q, d2 = _order_hdim(g)
    if d != d2:
        raise TruncationMismatchError(f"hdim mismatch {d} vs {d2}")
    if not 0 <= r <= min(p, q):
        raise InvalidInputError(f"contraction index {r} outside [0, {min(p, q)}]")
    out_order = p + q - 2 * r
    if _use_dense(f, g, d):
        fd = _as_coo(f).to_dense()
        gd = _as_coo(g).to_dense()
        res = np.tensordot(fd, gd, axes=(list(range(p - r, p)), list(range(r))))
        if out_order == 0:
            v = float(res)
            return CooTensor(0, d, np.zeros((1 if v else 0, 0)), [v] if v else [], _canonical=True)
        nz = np.nonzero(res)
        return CooTensor(out_order, d, np.stack(nz, axis=1), res[nz], _canonical=True)
    fo, go = _as_coo(f), _as_coo(g)
    if fo.values.size == 0 or go.values.size == 0:
        return CooTensor(out_order, d, np.zeros((0, out_order)), [], _canonical=True)
    f_row = _encode(fo.coords[:, : p - r], d)
    f_key = _encode(fo.coords[:, p - r:], d)
    g_key = _encode(go.coords[:, :r], d)
    g_col = _encode(go.coords[:, r:], d)
    keys, inv = np.unique(np.concatenate([f_key, g_key]), return_inverse=True)
    fk, gk = inv[: f_key.size], inv[f_key.size:]
    rows, ri = np.unique(f_row, return_inverse=True)
    cols, ci = np.unique(g_col, return_inverse=True)
    F = sp.csr_matrix((fo.values, (ri, fk)), shape=(rows.size, keys.size))
    G = sp.csr_matrix((go.values, (gk, ci)), shape=(keys.size, cols.size))
    P = (F @ G).tocoo()
    keep = P.data != 0
    a = _decode(rows[P.row[keep]], d, p - r)
    b = _decode(cols[P.col[keep]], d, q - r)
    return CooTensor(out_order, d, np.concatenate([a, b], axis=1), P.data[keep], _canonical=True)


def _use_dense(f, g, d) -> bool:
    def dense_ok(x):
        if isinstance(x, np.ndarray):
            return True
        k = x.order
        if d ** k > DENSE_MAX_SIZE:
            return False
        nnz = x.nnz if isinstance(x, ScalarKernel) else x.values.size
        fill = (float(np.sum(x.orbits)) if isinstance(x, ScalarKernel) else nnz) / float(d) ** k
        return fill > DENSE_FILL
    return dense_ok(f) and dense_ok(g)


def kernel_norm(f) -> float:
    """Hilbert-Schmidt norm over all ordered tuples."""
    return f.norm()


def contraction_norm(f, g, r: int) -> float:
    return contract(f, g, r).norm()


# ---------------------------------------------------------------------------
# state-space valued kernels


class Kernel:
    """Kernel of order ``p`` in ``h^{(.) p} (x) H`` at truncation ``(hdim, Hdim)``.

    ``components[i]`` is the scalar kernel ``<f, e_i>``.
    """

    def __init__(self, components):
        components = list(components)
        if not components:
            raise InvalidInputError("a kernel needs at least one component")
        p, d = components[0].order, components[0].hdim
        for c in components:
            if (c.order, c.hdim) != (p, d):
                raise TruncationMismatchError("components must share order and hdim")
        self.components = components
        self.order = p
        self.hdim = d
        self.Hdim = len(components)

    @classmethod
    def zero(cls, order: int, hdim: int, Hdim: int) -> "Kernel":
        z = ScalarKernel.zero(order, hdim)
        return cls([z] * Hdim)

    @classmethod
    def single(cls, g: ScalarKernel, i: int, Hdim: int) -> "Kernel":
        """``g (x) e_i``."""
        if not 0 <= i < Hdim:
            raise InvalidInputError(f"component {i} outside [0, {Hdim})")
        z = ScalarKernel.zero(g.order, g.hdim)
        return cls([g if k == i else z for k in range(Hdim)])

    @classmethod
    def from_entries(cls, order, hdim, Hdim, entries, strict=False) -> "Kernel":
        """Entries ``[(i, (j1..jp), value), ...]``; duplicates summed, then symmetrized."""
        buckets = [[] for _ in range(Hdim)]
        for i, js, v in entries:
            i = int(i)
            if not 0 <= i < Hdim:
                raise InvalidInputError(f"component index {i} outside [0, {Hdim})")
            js = tuple(int(j) for j in js)
            if len(js) != order:
                raise InvalidInputError(f"index tuple {js} does not have length {order}")
            if any(j < 0 or j >= hdim for j in js):
                raise InvalidInputError(f"index tuple {js} outside [0, {hdim})")
            buckets[i].append((js, float(v)))
        return cls([ScalarKernel.from_entries(order, hdim, b, strict=strict) if b
                    else ScalarKernel.zero(order, hdim) for b in buckets])

    @classmethod
    def from_matrix(cls, M) -> "Kernel":
        """Order-1 kernel with ``<f_i, h_k> = M[i, k]``."""
        M = np.asarray(M, dtype=float)
        comps = []
        for row in M:
            nz = np.flatnonzero(row)
            comps.append(ScalarKernel(1, M.shape[1], nz.reshape(-1, 1), row[nz]))
        return cls(comps)

    def component(self, i: int) -> ScalarKernel:
        if not 0 <= i < self.Hdim:
            raise InvalidInputError(f"component {i} outside [0, {self.Hdim})")
        return self.components[i]

    def norm(self) -> float:
        return math.sqrt(sum(c.norm() ** 2 for c in self.components))

    def component_norms(self) -> np.ndarray:
        return np.array([c.norm() for c in self.components])

    def scaled(self, factors) -> "Kernel":
        """Multiply component ``i`` by ``factors[i]`` (or a common scalar)."""
        factors = np.broadcast_to(np.asarray(factors, dtype=float), (self.Hdim,))
        return Kernel([c * f for c, f in zip(self.components, factors)])

    def __add__(self, other: "Kernel") -> "Kernel":
        if (self.order, self.hdim, self.Hdim) != (other.order, other.hdim, other.Hdim):
            raise TruncationMismatchError("kernels live on different truncations")
        return Kernel([a + b for a, b in zip(self.components, other.components)])

    def embedded(self, hdim: int | None = None, Hdim: int | None = None,
                 h_offset: int = 0, H_offset: int = 0) -> "Kernel":
        """Place the kernel inside larger truncations at the given offsets."""
        hdim = self.hdim if hdim is None else hdim
        Hdim = self.Hdim if Hdim is None else Hdim
        if H_offset + self.Hdim > Hdim:
            raise InvalidInputError("state-space offset exceeds new Hdim")
        z = ScalarKernel.zero(self.order, hdim)
        comps = [z] * Hdim
        for i, c in enumerate(self.components):
            comps[H_offset + i] = c.with_hdim(hdim, h_offset)
        return Kernel(comps)

    def to_json(self) -> dict:
        coeffs = []
        for i, c in enumerate(self.components):
            o = c.ordered()
            for js, v in zip(o.coords.tolist(), o.values.tolist()):
                coeffs.append([i, js, v])
        return {"p": self.order, "hdim": self.hdim, "Hdim": self.Hdim, "coeffs": coeffs}

    @classmethod
    def from_json(cls, obj, strict: bool = False) -> "Kernel":
        try:
            p, d, m = int(obj["p"]), int(obj["hdim"]), int(obj["Hdim"])
            entries = [(c[0], c[1], c[2]) for c in obj["coeffs"]]
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            raise InvalidInputError(f"malformed kernel object: {exc}") from exc
        if p < 1 or d < 1 or m < 1:
            raise InvalidInputError("kernel dimensions must be positive")
        return cls.from_entries(p, d, m, entries, strict=strict)

    def __repr__(self):
        return f"Kernel(p={self.order}, hdim={self.hdim}, Hdim={self.Hdim})"


def component(f: Kernel, i: int) -> ScalarKernel:
    return f.component(i)


def contraction_profile(f: Kernel) -> dict:
    """``{(i, r): ||f_i (x)_r f_i||}`` for every component and ``r = 1..p-1``."""
    table = {}
    for i, c in enumerate(f.components):
        for r in range(1, f.order):
            table[(i, r)] = 0.0 if c.is_zero() else contract(c, c, r).norm()
    return table


def contraction_norm_matrix(f: Kernel) -> np.ndarray:
    """Array ``out[i, r]`` = ``||f_i (x)_r f_i||`` for ``r = 0..p``.

    Columns ``0`` and ``p`` hold ``||f_i||^2`` (both extreme contractions
    have that norm), which keeps indexing by ``r`` direct.
    """
    p = f.order
    out = np.zeros((f.Hdim, p + 1))
    for i, c in enumerate(f.components):
        if c.is_zero():
            continue
        n2 = c.norm() ** 2
        out[i, 0] = out[i, p] = n2
        for r in range(1, p):
            out[i, r] = contract(c, c, r).norm()
    return out


class ChaosExpansion:
    """Finite chaos expansion ``F = sum_r I_r(f_r)`` (centered, no order-0 term)."""

    def __init__(self, hdim: int, Hdim: int, kernels: dict | None = None):
        self.hdim = int(hdim)
        self.Hdim = int(Hdim)
        if self.hdim < 1 or self.Hdim < 1:
            raise InvalidInputError("expansion dimensions must be positive")
        self.kernels: dict[int, Kernel] = {}
        for r, k in sorted((kernels or {}).items()):
            r = int(r)
            if r < 1:
                raise InvalidInputError(f"chaos orders must be positive, got {r}")
            if k.order != r:
                raise InvalidInputError(f"kernel of order {k.order} stored under key {r}")
            if (k.hdim, k.Hdim) != (self.hdim, self.Hdim):
                raise TruncationMismatchError(
                    f"kernel truncation ({k.hdim}, {k.Hdim}) differs from "
                    f"expansion ({self.hdim}, {self.Hdim})")
            self.kernels[r] = k

    @classmethod
    def single(cls, f: Kernel) -> "ChaosExpansion":
        return cls(f.hdim, f.Hdim, {f.order: f})

    @property
    def orders(self) -> list[int]:
        return sorted(self.kernels)

    @property
    def max_order(self) -> int:
        return max(self.kernels, default=0)

    def kernel(self, r: int) -> Kernel:
        """Order-``r`` kernel, the zero kernel when absent."""
        if r in self.kernels:
            return self.kernels[r]
        return Kernel.zero(r, self.hdim, self.Hdim)

    def truncated(self, N: int) -> "ChaosExpansion":
        return ChaosExpansion(self.hdim, self.Hdim,
                              {r: k for r, k in self.kernels.items() if r <= N})

    def scaled_by_order(self, weight) -> "ChaosExpansion":
        """Multiply each ``f_r`` by ``weight(r)``."""
        return ChaosExpansion(self.hdim, self.Hdim,
                              {r: k.scaled(weight(r)) for r, k in self.kernels.items()})

    def embedded(self, hdim=None, Hdim=None, h_offset=0, H_offset=0) -> "ChaosExpansion":
        hdim = self.hdim if hdim is None else hdim
        Hdim = self.Hdim if Hdim is None else Hdim
        return ChaosExpansion(hdim, Hdim, {r: k.embedded(hdim, Hdim, h_offset, H_offset)
                                           for r, k in self.kernels.items()})

    def __add__(self, other: "ChaosExpansion") -> "ChaosExpansion":
        if (self.hdim, self.Hdim) != (other.hdim, other.Hdim):
            raise TruncationMismatchError("expansions live on different truncations")
        ks = dict(self.kernels)
        for r, k in other.kernels.items():
            ks[r] = ks[r] + k if r in ks else k
        return ChaosExpansion(self.hdim, self.Hdim, ks)

    def to_json(self) -> dict:
        return {"hdim": self.hdim, "Hdim": self.Hdim,
                "orders": [self.kernels[r].to_json() for r in self.orders]}

    @classmethod
    def from_json(cls, obj, strict: bool = False) -> "ChaosExpansion":
        try:
            d, m = int(obj["hdim"]), int(obj["Hdim"])
            kernels = [Kernel.from_json(k, strict=strict) for k in obj["orders"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidInputError(f"malformed expansion object: {exc}") from exc
        ks = {}
        for k in kernels:
            if k.order in ks:
                raise InvalidInputError(f"order {k.order} listed twice")
            ks[k.order] = k
        return cls(d, m, ks)

    def dumps(self) -> str:
        return json.dumps(self.to_json())

    def __repr__(self):
        return f"ChaosExpansion(hdim={self.hdim}, Hdim={self.Hdim}, orders={self.orders})"
