"""Finite-truncation linear algebra for operators on the state space.

Operators are stored densely as ``dim x dim`` real matrices in a fixed
orthonormal basis ``e_0, ..., e_{dim-1}``; entry ``(i, j)`` is
``<T e_j, e_i>``.  All indices are zero-based.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .exceptions import InvalidInputError, RankViolationError

SYMMETRY_ATOL = 1e-12
RANK_RTOL = 1e-8


@dataclass(frozen=True)
class Truncation:
    """Dimensions of the truncated isonormal space and state space."""

    hdim: int
    Hdim: int

    def __post_init__(self):
        if int(self.hdim) < 1 or int(self.Hdim) < 1:
            raise InvalidInputError(f"truncation dimensions must be >= 1, got {self}")


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    """Dense real matrix of a bounded operator on the truncated space.

    Parameters
    ----------
    entries : array_like
        Square matrix; copied and frozen.
    symmetric : bool
        When set, construction verifies ``entries == entries.T`` to
        :data:`SYMMETRY_ATOL`.
    """

    entries: np.ndarray
    symmetric: bool = False

    def __post_init__(self):
        a = np.array(self.entries, dtype=float, copy=True)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise InvalidInputError(f"operator must be a square matrix, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise InvalidInputError("operator has non-finite entries")
        if self.symmetric and a.size and np.max(np.abs(a - a.T)) > SYMMETRY_ATOL:
            raise InvalidInputError("operator flagged symmetric but is not")
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @classmethod
    def zeros(cls, dim: int) -> "OperatorMatrix":
        return cls(np.zeros((dim, dim)), symmetric=True)

    @classmethod
    def identity(cls, dim: int) -> "OperatorMatrix":
        return cls(np.eye(dim), symmetric=True)

    @classmethod
    def diag(cls, values) -> "OperatorMatrix":
        return cls(np.diag(np.asarray(values, dtype=float)), symmetric=True)

    @classmethod
    def rank_one(cls, u, v=None) -> "OperatorMatrix":
        """``u (x) v``, i.e. ``h -> <h, v> u``; symmetric when ``v`` is omitted."""
        u = np.asarray(u, dtype=float)
        if v is None:
            return cls(np.outer(u, u), symmetric=True)
        return cls(np.outer(u, np.asarray(v, dtype=float)))

    def is_symmetric(self, atol: float = SYMMETRY_ATOL) -> bool:
        return bool(np.max(np.abs(self.entries - self.entries.T), initial=0.0) <= atol)

    def padded(self, dim: int) -> "OperatorMatrix":
        """Embed into a larger space, zero outside the leading block."""
        if dim < self.dim:
            raise InvalidInputError("cannot pad to a smaller dimension")
        out = np.zeros((dim, dim))
        out[: self.dim, : self.dim] = self.entries
        return OperatorMatrix(out, symmetric=self.symmetric)

    def __add__(self, other):
        return OperatorMatrix(self.entries + as_array(other),
                              symmetric=self.symmetric and _sym_of(other))

    def __sub__(self, other):
        return OperatorMatrix(self.entries - as_array(other),
                              symmetric=self.symmetric and _sym_of(other))

    def __mul__(self, scalar):
        return OperatorMatrix(float(scalar) * self.entries, symmetric=self.symmetric)

    __rmul__ = __mul__

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)

    def to_json(self) -> dict:
        return {"dim": self.dim, "entries": [float(x) for x in self.entries.ravel()]}

    @classmethod
    def from_json(cls, obj: dict) -> "OperatorMatrix":
        try:
            dim = int(obj["dim"])
            vals = np.asarray(obj["entries"], dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidInputError(f"malformed operator object: {exc}") from exc
        if vals.size != dim * dim:
            raise InvalidInputError(f"expected {dim * dim} entries, got {vals.size}")
        a = vals.reshape(dim, dim)
        sym = bool(np.max(np.abs(a - a.T), initial=0.0) <= SYMMETRY_ATOL)
        return cls(a, symmetric=sym)

    def dumps(self) -> str:
        return json.dumps(self.to_json())

    @classmethod
    def loads(cls, text: str) -> "OperatorMatrix":
        return cls.from_json(json.loads(text))


def _sym_of(x) -> bool:
    return isinstance(x, OperatorMatrix) and x.symmetric


def as_array(A) -> np.ndarray:
    """Return the dense entries of an operator or array, validating finiteness."""
    if isinstance(A, OperatorMatrix):
        return A.entries
    a = np.asarray(A, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidInputError(f"operator must be a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidInputError("operator has non-finite entries")
    return a


def singular_values(A) -> np.ndarray:
    """Singular values in decreasing order.

    Symmetric input goes through ``eigvalsh`` (absolute eigenvalues), the
    rest through an SVD; forming ``A^T A`` would square the conditioning
    and lose small singular values.
    """
    a = as_array(A)
    if a.size == 0:
        return np.zeros(0)
    if np.max(np.abs(a - a.T)) <= SYMMETRY_ATOL:
        s = np.abs(np.linalg.eigvalsh(0.5 * (a + a.T)))
        return np.sort(s)[::-1]
    return np.linalg.svd(a, compute_uv=False)


def schatten_norm(A, p: float = 1.0) -> float:
    """Schatten ``p``-norm ``(sum_i s_i^p)^(1/p)``; ``p = inf`` gives the operator norm."""
    if not (p >= 1):
        raise InvalidInputError(f"Schatten index must be >= 1, got {p}")
    s = singular_values(A)
    if s.size == 0:
        return 0.0
    if math.isinf(p):
        return float(s[0])
    if p == 1:
        return float(np.sum(s))
    if p == 2:
        return float(np.sqrt(np.sum(s * s)))
    smax = s[0]
    if smax == 0:
        return 0.0
    return float(smax * np.sum((s / smax) ** p) ** (1.0 / p))


def batched_trace_norm(stack: np.ndarray) -> np.ndarray:
    """Trace norms of a stack of square matrices, shape ``(n, m, m) -> (n,)``."""
    stack = np.asarray(stack, dtype=float)
    if stack.shape[-1] == 1:
        return np.abs(stack[:, 0, 0])
    return np.linalg.svd(stack, compute_uv=False).sum(axis=-1)


def operator_norm(A) -> float:
    return schatten_norm(A, math.inf)


def trace(A) -> float:
    """Algebraic trace ``sum_i <A e_i, e_i>``."""
    return float(np.trace(as_array(A)))


def min_eigenvalue(A) -> float:
    a = as_array(A)
    if a.size == 0:
        return 0.0
    return float(np.linalg.eigvalsh(0.5 * (a + a.T))[0])


def is_psd(A, atol: float = 1e-10) -> bool:
    a = as_array(A)
    scale = max(1.0, float(np.max(np.abs(a), initial=0.0)))
    return bool(np.max(np.abs(a - a.T), initial=0.0) <= 1e-9 * scale
                and min_eigenvalue(a) >= -atol * scale)


def projector(dim: int, m: int) -> np.ndarray:
    """Orthogonal projection onto the span of the first ``m`` basis vectors."""
    if not 0 <= m <= dim:
        raise InvalidInputError(f"cut {m} outside [0, {dim}]")
    return np.diag((np.arange(dim) < m).astype(float))


def block_decompose(A, m: int):
    """Split ``A`` along ``P_m`` and ``Q_m = I - P_m``.

    Returns
    -------
    tuple of OperatorMatrix
        ``(P A P, Q A P, P A Q, Q A Q)``; the four pieces sum to ``A``
        exactly since each entry lands in exactly one block.
    """
    a = as_array(A)
    dim = a.shape[0]
    if not 0 <= m <= dim:
        raise InvalidInputError(f"cut {m} outside [0, {dim}]")
    head = np.arange(dim) < m
    pp = np.where(np.outer(head, head), a, 0.0)
    qp = np.where(np.outer(~head, head), a, 0.0)
    pq = np.where(np.outer(head, ~head), a, 0.0)
    qq = np.where(np.outer(~head, ~head), a, 0.0)
    return tuple(OperatorMatrix(b) for b in (pp, qp, pq, qq))


def numerical_rank(A, rtol: float = RANK_RTOL) -> int:
    s = singular_values(A)
    if s.size == 0:
        return 0
    return int(np.sum(s > rtol * max(1.0, s[0])))


def finite_rank_s1_bound(A, r: int) -> float:
    """``sqrt(r) * ||A||_S2``, an upper bound on ``||A||_S1`` for rank ``<= r``."""
    if r < 0:
        raise InvalidInputError("rank bound must be nonnegative")
    rank = numerical_rank(A)
    if rank > r:
        raise RankViolationError(f"numerical rank {rank} exceeds asserted rank {r}")
    return math.sqrt(r) * schatten_norm(A, 2)
