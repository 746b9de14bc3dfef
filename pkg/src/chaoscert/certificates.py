"""Quantitative d2 certificates for finite chaos expansions.

The bound is assembled from six remainder terms evaluated on a grid of
chaos cut-offs ``N`` and state-space cuts ``m``:

* ``R1`` chaos tail mass of ``F`` beyond order ``N``,
* ``R2`` per-order covariance gaps in trace norm,
* ``R3`` the finite-block fluctuation term built from contraction norms,
* ``R4`` and ``R5`` covariance tails beyond the cut ``m``,
* ``R6`` target covariance mass beyond order ``N``.

Constants are computed in exact integer arithmetic.
"""
from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import dataclass, field
from decimal import Decimal, localcontext
from fractions import Fraction

import numpy as np

from .chaos import exact_covariance, order_covariances
from .exceptions import InvalidInputError, NondegeneracyWarning, TruncationMismatchError
from .hilbert import OperatorMatrix, as_array, is_psd, min_eigenvalue, schatten_norm
from .tensors import ChaosExpansion, Kernel, ScalarKernel, contraction_norm_matrix

PSD_ATOL = 1e-10
GRID_COLUMNS = ("N", "m", "R1", "R2", "R3", "R4", "R5", "R6", "bound")


# ---------------------------------------------------------------------------
# constants


def _exact_sqrt_product(a: int, b: int) -> float:
    """``a * sqrt(b)`` rounded once, for nonnegative integers."""
    if b < 2 ** 52 and a < 2 ** 52:
        return a * math.sqrt(b)
    with localcontext() as ctx:
        ctx.prec = 60
        return float(Decimal(a) * Decimal(b).sqrt())


def constant_cp_squared(p: int, r: int) -> int:
    """``c_p(r)^2`` as an exact integer."""
    if not (isinstance(p, (int, np.integer)) and isinstance(r, (int, np.integer))):
        raise InvalidInputError("constant arguments must be integers")
    if p < 2 or not 1 <= r <= p - 1:
        raise InvalidInputError(f"c_p(r) needs p >= 2 and 1 <= r <= p-1, got p={p}, r={r}")
    a = p * math.factorial(r - 1) * math.comb(p - 1, r - 1) ** 2
    return a * a * math.factorial(2 * p - 2 * r)


def constant_cp(p: int, r: int) -> float:
    """``c_p(r) = p (r-1)! C(p-1, r-1)^2 sqrt((2p-2r)!)``."""
    constant_cp_squared(p, r)  # validation
    a = p * math.factorial(r - 1) * math.comb(p - 1, r - 1) ** 2
    return _exact_sqrt_product(a, math.factorial(2 * p - 2 * r))


def constant_cpq(p: int, q: int) -> int:
    """``c(p, q) = (p!)^2 C(q-1, p-1)^2 (q-p)!`` for ``1 <= p < q``."""
    if not 1 <= p < q:
        raise InvalidInputError(f"c(p, q) needs 1 <= p < q, got p={p}, q={q}")
    return math.factorial(p) ** 2 * math.comb(q - 1, p - 1) ** 2 * math.factorial(q - p)


def constant_cpqchi_exact(p: int, q: int, chi: int) -> Fraction:
    """``c(p, q, chi)`` as an exact rational (the ``p^2/2`` factor may be half-integral)."""
    if p < 1 or q < 1 or not 1 <= chi <= min(p, q) - 1:
        raise InvalidInputError(
            f"c(p, q, chi) needs 1 <= chi <= min(p, q) - 1, got p={p}, q={q}, chi={chi}")
    num = (p * p * math.factorial(chi - 1) ** 2 * math.comb(p - 1, chi - 1) ** 2
           * math.comb(q - 1, chi - 1) ** 2 * math.factorial(p + q - 2 * chi))
    return Fraction(num, 2)


def constant_cpqchi(p: int, q: int, chi: int) -> float:
    """``c(p, q, chi) = (p^2/2) ((chi-1)!)^2 C(p-1,chi-1)^2 C(q-1,chi-1)^2 (p+q-2chi)!``."""
    return float(constant_cpqchi_exact(p, q, chi))


# ---------------------------------------------------------------------------
# targets


class TargetSpec:
    """Per-order Gaussian target covariances ``T_{Z_r}``.

    Parameters
    ----------
    per_order : dict
        ``{r: OperatorMatrix or array}``, each symmetric PSD; missing
        orders are zero.
    """

    def __init__(self, per_order: dict, dim: int | None = None):
        self.per_order: dict[int, np.ndarray] = {}
        for r, T in sorted(per_order.items()):
            r = int(r)
            if r < 1:
                raise InvalidInputError(f"target orders must be positive, got {r}")
            a = np.array(as_array(T), dtype=float)
            if np.max(np.abs(a - a.T), initial=0.0) > 1e-12:
                raise InvalidInputError(f"target at order {r} is not symmetric")
            if a.size and min_eigenvalue(a) < -PSD_ATOL * max(1.0, np.abs(a).max()):
                raise InvalidInputError(f"target at order {r} is not positive semidefinite")
            self.per_order[r] = 0.5 * (a + a.T)
        dims = {a.shape[0] for a in self.per_order.values()}
        if dim is not None:
            dims.add(int(dim))
        if len(dims) > 1:
            raise TruncationMismatchError(f"targets live on different dimensions {sorted(dims)}")
        if not dims:
            raise InvalidInputError("an empty target needs an explicit dimension")
        self.dim = dims.pop()

    @classmethod
    def single(cls, T, order: int = 1) -> "TargetSpec":
        return cls({order: T})

    @classmethod
    def zero(cls, dim: int) -> "TargetSpec":
        return cls({}, dim=dim)

    def order(self, r: int) -> np.ndarray:
        return self.per_order.get(r, np.zeros((self.dim, self.dim)))

    @property
    def aggregate(self) -> np.ndarray:
        out = np.zeros((self.dim, self.dim))
        for a in self.per_order.values():
            out = out + a
        return out

    def nondegenerate(self) -> bool:
        return self.dim > 0 and min_eigenvalue(self.aggregate) > 0

    def check_nondegenerate(self) -> bool:
        ok = self.nondegenerate()
        if not ok:
            warnings.warn("aggregate target covariance is singular at this truncation",
                          NondegeneracyWarning, stacklevel=3)
        return ok

    def to_json(self) -> dict:
        return {"dim": self.dim,
                "orders": {str(r): OperatorMatrix(a).to_json() for r, a in self.per_order.items()}}

    @classmethod
    def from_json(cls, obj) -> "TargetSpec":
        """Accepts a bare operator object (order-1 target) or ``{"orders": {...}}``."""
        try:
            if "orders" in obj:
                per = {int(r): OperatorMatrix.from_json(o) for r, o in obj["orders"].items()}
                return cls(per, dim=obj.get("dim"))
            return cls.single(OperatorMatrix.from_json(obj))
        except (TypeError, AttributeError, ValueError) as exc:
            if isinstance(exc, InvalidInputError):
                raise
            raise InvalidInputError(f"malformed target object: {exc}") from exc


# ---------------------------------------------------------------------------
# expansion summaries


class _Summary:
    """Per-order quantities of an expansion reused across the grid."""

    def __init__(self, F: ChaosExpansion):
        self.F = F
        self.cov = order_covariances(F)
        self.norms2 = {r: np.array([c.norm() ** 2 for c in K.components])
                       for r, K in F.kernels.items()}
        self.cn = {r: contraction_norm_matrix(K) for r, K in F.kernels.items()}
        self.total_trace = float(sum(np.trace(c) for c in self.cov.values()))

    def diag_prefix(self, r: int, m_cut: int) -> float:
        """``sum_{i < m_cut} ||f_{r,i} (x)_{r-chi} f_{r,i}||^2`` weighted by ``c_r(chi)^2``."""
        if r not in self.cn or r < 2:
            return 0.0
        cn = self.cn[r][:m_cut]
        total = 0
        for chi in range(1, r):
            total += constant_cp_squared(r, chi) * float(np.sum(cn[:, r - chi] ** 2))
        return float(total)


def _check_component(F: ChaosExpansion, i: int):
    if not 0 <= i < F.Hdim:
        raise InvalidInputError(f"component index {i} outside [0, {F.Hdim})")


def gamma_terms(F: ChaosExpansion, i: int, j: int, N: int) -> dict:
    """The ``gamma`` quantities entering ``R3`` for the component pair ``(i, j)``.

    Returns
    -------
    dict
        ``{"diag": {l: gamma^(l)}, "cross": {(l1, l2): gamma^(l1,l2)}}``
        for ``1 <= l <= N`` and ordered pairs ``l1 != l2``.  Cross terms
        involving an order absent from ``F`` are structural zeros (the
        corresponding carre du champ vanishes identically) and are
        reported as 0.
    """
    _check_component(F, i)
    _check_component(F, j)
    if N < 1:
        raise InvalidInputError("N must be >= 1")
    cn = {r: contraction_norm_matrix(K) for r, K in F.kernels.items()}
    nrm = {r: cn[r][:, 0] for r in cn}
    diag = {}
    for l in range(1, N + 1):
        g = 0.0
        if l in cn:
            for chi in range(1, l):
                g += float(constant_cp_squared(l, chi)) * (cn[l][i, l - chi] ** 2
                                                           + cn[l][j, l - chi] ** 2)
        diag[l] = float(0.5 * g)
    cross = {}
    for l1 in range(1, N + 1):
        for l2 in range(1, N + 1):
            if l1 == l2:
                continue
            if l1 not in cn or l2 not in cn:
                cross[(l1, l2)] = 0.0
                continue
            g = 0.0
            if l1 < l2:
                g += constant_cpq(l1, l2) * nrm[l1][i] * cn[l2][j, l2 - l1]
            else:
                g += constant_cpq(l2, l1) * nrm[l2][j] * cn[l1][i, l1 - l2]
            lo, hi = min(l1, l2), max(l1, l2)
            for chi in range(1, lo):
                g += constant_cpqchi(lo, hi, chi) * (cn[l1][i, l1 - chi] ** 2
                                                     + cn[l2][j, l2 - chi] ** 2)
            cross[(l1, l2)] = float(g)
    return {"diag": diag, "cross": cross}


def _cross_sum(s: _Summary, N: int, M: int) -> float:
    """``sum_{i,j < M} sum_{l1 != l2 <= N} gamma^(l1,l2)_{ij}`` in factored form."""
    orders = [r for r in s.F.orders if r <= N]
    total = 0.0
    for l1 in orders:
        for l2 in orders:
            if l1 == l2:
                continue
            lo, hi = min(l1, l2), max(l1, l2)
            n_lo = float(np.sum(s.norms2[lo][:M]))
            c_hi = float(np.sum(s.cn[hi][:M, hi - lo]))
            total += constant_cpq(lo, hi) * n_lo * c_hi
            for chi in range(1, lo):
                a1 = float(np.sum(s.cn[l1][:M, l1 - chi] ** 2))
                a2 = float(np.sum(s.cn[l2][:M, l2 - chi] ** 2))
                total += constant_cpqchi(lo, hi, chi) * M * (a1 + a2)
    return total


# ---------------------------------------------------------------------------
# reports


@dataclass
class CertificateReport:
    """Remainder terms at the selected grid point and the full grid table."""

    R1: float
    R2: float
    R3: float
    R4: float
    R5: float
    R6: float
    N: int
    m: int
    bound: float
    grid_table: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    def terms(self) -> dict:
        return {k: getattr(self, k) for k in ("R1", "R2", "R3", "R4", "R5", "R6")}

    def to_json(self) -> dict:
        return {**{k: float(v) for k, v in self.terms().items()},
                "N": int(self.N), "m": int(self.m), "bound": float(self.bound),
                "grid_table": self.grid_table, "diagnostics": _plain(self.diagnostics)}

    def dumps(self, **kw) -> str:
        return json.dumps(self.to_json(), **kw)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=GRID_COLUMNS, extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        for row in self.grid_table:
            w.writerow(row)
        return buf.getvalue()


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


def _row(N, m, R) -> dict:
    row = {"N": int(N), "m": int(m)}
    row.update({k: float(v) for k, v in R.items()})
    row["bound"] = R["R1"] + R["R6"] + R["R2"] + (R["R3"] + R["R4"] + R["R5"])
    return row


def _validate_cut(F: ChaosExpansion, m_cut: int):
    if not 0 <= m_cut <= F.Hdim:
        raise InvalidInputError(f"cut m={m_cut} outside [0, {F.Hdim}]")


def _terms(s: _Summary, targets: TargetSpec, N: int, M: int) -> tuple[dict, dict]:
    F = s.F
    if targets.dim != F.Hdim:
        raise TruncationMismatchError(f"target dimension {targets.dim} differs from Hdim {F.Hdim}")
    if N < 1:
        raise InvalidInputError("N must be >= 1")
    _validate_cut(F, M)
    zero = np.zeros((F.Hdim, F.Hdim))
    tail_mass = sum(float(np.trace(s.cov[r])) for r in F.orders if r > N)
    R1 = math.sqrt(tail_mass)
    gaps = {}
    for r in sorted(set(o for o in F.orders if o <= N) | set(o for o in targets.per_order if o <= N)):
        gaps[r] = schatten_norm(s.cov.get(r, zero) - targets.order(r), 1)
    R2 = 0.5 * sum(gaps.values())
    S = 0.0
    for l in F.orders:
        if l <= N:
            S += M * s.diag_prefix(l, M)
    S += _cross_sum(s, N, M)
    R3 = math.sqrt(M) * N * math.sqrt(max(S, 0.0))
    tail = sum(float(np.sum(np.diag(s.cov[r])[M:])) for r in F.orders if r <= N)
    head = sum(float(np.sum(np.diag(s.cov[r])[:M])) for r in F.orders if r <= N)
    R4 = (N + 2) / 2.0 * tail
    R5 = math.sqrt(s.total_trace) * math.sqrt((N + 3) * tail)
    R6 = 0.5 * sum(float(np.trace(a)) for r, a in targets.per_order.items() if r > N)
    diag = {"trace_gaps": gaps, "gamma_sum": S, "cov_tail": tail,
            "R5_partial_trace": math.sqrt(head) * math.sqrt((N + 3) * tail)}
    return {"R1": R1, "R2": R2, "R3": R3, "R4": R4, "R5": R5, "R6": R6}, diag


def r_terms(F: ChaosExpansion, targets: TargetSpec, N: int, m_cut: int) -> CertificateReport:
    """All six remainder terms at one grid point ``(N, m_cut)``."""
    s = _Summary(F)
    R, diag = _terms(s, targets, int(N), int(m_cut))
    row = _row(N, m_cut, R)
    return CertificateReport(**R, N=int(N), m=int(m_cut), bound=row["bound"],
                             grid_table=[row], diagnostics=diag)


def _grid_report(rows, diags, extra) -> CertificateReport:
    best = min(range(len(rows)), key=lambda k: (rows[k]["bound"], k))
    b = rows[best]
    diagnostics = {"selected": diags[best], **extra}
    return CertificateReport(b["R1"], b["R2"], b["R3"], b["R4"], b["R5"], b["R6"],
                             b["N"], b["m"], b["bound"], grid_table=rows, diagnostics=diagnostics)


def theorem35_bound(F: ChaosExpansion, targets: TargetSpec, N_grid, m_grid) -> CertificateReport:
    """Minimize ``R1 + R6 + R2 + (R3 + R4 + R5)`` over ``N_grid x m_grid``.

    Ties are resolved in favour of the earliest grid point (``N`` major).
    """
    N_grid, m_grid = list(N_grid), list(m_grid)
    if not N_grid or not m_grid:
        raise InvalidInputError("grids must be nonempty")
    nondeg = targets.check_nondegenerate()
    s = _Summary(F)
    rows, diags = [], []
    for N in N_grid:
        for m in m_grid:
            R, d = _terms(s, targets, int(N), int(m))
            rows.append(_row(N, m, R))
            diags.append(d)
    per_N = {}
    for row in rows:
        per_N[row["N"]] = min(per_N.get(row["N"], math.inf), row["bound"])
    return _grid_report(rows, diags, {"target_nondegenerate": nondeg,
                                      "best_bound_per_N": per_N,
                                      "conditions": check_fmt_conditions(F, targets, math.inf)})


def staged_grid(F: ChaosExpansion, targets: TargetSpec, eps: float, N_max: int | None = None,
                m_max: int | None = None) -> dict:
    """Three-stage choice of ``(N, m)`` for a target accuracy ``eps``.

    The smallest ``N`` with ``R1 + R6 < eps/3`` is fixed first, then the
    smallest cut ``m`` with ``R4 + R5 < eps/3``; the remaining budget
    ``R2 + R3 < eps/3`` is reported as met or not.  When a stage cannot be
    met inside the caps the largest candidate is kept.
    """
    if not eps > 0:
        raise InvalidInputError("eps must be positive")
    N_max = N_max or max(F.max_order, 1)
    m_max = m_max or F.Hdim
    s = _Summary(F)
    third = eps / 3.0
    N = N_max
    for n in range(1, N_max + 1):
        R, _ = _terms(s, targets, n, m_max)
        if R["R1"] + R["R6"] < third:
            N = n
            break
    m = m_max
    for k in range(1, m_max + 1):
        R, _ = _terms(s, targets, N, k)
        if R["R4"] + R["R5"] < third:
            m = k
            break
    R, _ = _terms(s, targets, N, m)
    rep = r_terms(F, targets, N, m)
    return {"N": N, "m": m, "eps": eps, "report": rep,
            "stage_tail": R["R1"] + R["R6"] < third,
            "stage_cut": R["R4"] + R["R5"] < third,
            "stage_n": R["R2"] + R["R3"] < third}


def fixed_chaos_bound(f: Kernel, T_Z, m_grid) -> CertificateReport:
    """Certificate for ``F = I_p(f)`` against a Gaussian target ``T_Z``.

    Single-order specialization: no chaos tail, no cross-order terms, the
    order cut-off fixed at ``N = p``.
    """
    m_grid = list(m_grid)
    if not m_grid:
        raise InvalidInputError("grid must be nonempty")
    T = np.asarray(as_array(T_Z), dtype=float)
    if not is_psd(T):
        raise InvalidInputError("target covariance must be symmetric PSD")
    p = f.order
    if T.shape[0] != f.Hdim:
        raise TruncationMismatchError(f"target dimension {T.shape[0]} differs from Hdim {f.Hdim}")
    F = ChaosExpansion.single(f)
    s = _Summary(F)
    cov = s.cov[p]
    gap = schatten_norm(cov - T, 1)
    R2 = 0.5 * gap
    d = np.diag(cov)
    rows, diags = [], []
    for M in m_grid:
        M = int(M)
        _validate_cut(F, M)
        S = M * s.diag_prefix(p, M) + 0.0
        R3 = math.sqrt(M) * p * math.sqrt(max(S, 0.0))
        tail = float(np.sum(d[M:]))
        R4 = (p + 2) / 2.0 * tail
        R5 = math.sqrt(s.total_trace) * math.sqrt((p + 3) * tail)
        R = {"R1": 0.0, "R2": R2, "R3": R3, "R4": R4, "R5": R5, "R6": 0.0}
        rows.append(_row(p, M, R))
        diags.append({"trace_gaps": {p: gap}, "gamma_sum": S, "cov_tail": tail,
                      "R5_partial_trace": math.sqrt(float(np.sum(d[:M]))) * math.sqrt((p + 3) * tail)})
    nondeg = bool(T.size and min_eigenvalue(T) > 0)
    if not nondeg:
        warnings.warn("target covariance is singular at this truncation",
                      NondegeneracyWarning, stacklevel=2)
    return _grid_report(rows, diags, {"target_nondegenerate": nondeg})


@dataclass(frozen=True)
class PairBound:
    """``(1/2) ||T1 - T2||_S1`` with the nondegeneracy status of the pair."""

    value: float
    nondegenerate: bool

    def __float__(self):
        return self.value


def gaussian_pair_bound(T1, T2) -> PairBound:
    """d2 bound between two centered Gaussians from their covariances."""
    a, b = as_array(T1), as_array(T2)
    if a.shape != b.shape:
        raise TruncationMismatchError("covariances have different dimensions")
    for t in (a, b):
        if not is_psd(t):
            raise InvalidInputError("covariance must be symmetric positive semidefinite")
    nondeg = bool(a.size) and (min_eigenvalue(a) > 0 or min_eigenvalue(b) > 0)
    if not nondeg:
        warnings.warn("neither covariance is positive definite", NondegeneracyWarning, stacklevel=2)
    return PairBound(0.5 * schatten_norm(a - b, 1), nondeg)


def tail_masses(F: ChaosExpansion) -> dict[int, float]:
    """``{N: sum_{r > N} sum_i r! ||f_{r,i}||^2}`` for ``N = 1 .. max order``."""
    cov = order_covariances(F)
    return {N: float(sum(np.trace(c) for r, c in cov.items() if r > N))
            for N in range(1, max(F.max_order, 1) + 1)}


def check_fmt_conditions(F: ChaosExpansion, targets: TargetSpec, tol: float) -> dict:
    """Finite-``n`` magnitudes of the fourth-moment convergence conditions.

    Each quantity is flagged when it exceeds ``tol``; deciding convergence
    requires a sequence of expansions and is left to the caller.
    """
    if targets.dim != F.Hdim:
        raise TruncationMismatchError(f"target dimension {targets.dim} differs from Hdim {F.Hdim}")
    cov = order_covariances(F)
    zero = np.zeros((F.Hdim, F.Hdim))
    orders = sorted(set(F.orders) | set(targets.per_order))
    gaps = {r: schatten_norm(cov.get(r, zero) - targets.order(r), 1) for r in orders}
    contractions = {}
    for r, K in F.kernels.items():
        if r >= 2:
            cn = contraction_norm_matrix(K)[:, 1:r]
            contractions[r] = float(cn.max()) if cn.size else 0.0
        else:
            contractions[r] = 0.0
    tails = tail_masses(F)
    flags = {"trace_gap": {r: v > tol for r, v in gaps.items()},
             "contraction": {r: v > tol for r, v in contractions.items()},
             "tail": {N: v > tol for N, v in tails.items()}}
    return {"trace_gap": gaps, "contraction_max": contractions, "tail_mass": tails,
            "tol": tol, "flags": flags,
            "all_within_tol": not any(any(v.values()) for v in flags.values())}


def sequence_bound(expansions, targets: TargetSpec, N_grid, m_grid) -> dict:
    """Certificates along a sequence, with ``R1`` taken as the sup over the sequence.

    Returns ``{"R1_sup": {N: value}, "reports": [CertificateReport, ...]}``
    where every report's ``R1`` (and ``bound``) uses the sequence supremum.
    """
    expansions = list(expansions)
    if not expansions:
        raise InvalidInputError("empty sequence")
    N_grid = list(N_grid)
    sup = {N: 0.0 for N in N_grid}
    for F in expansions:
        masses = tail_masses(F)
        for N in N_grid:
            sup[N] = max(sup[N], masses.get(N, 0.0) if N <= F.max_order else 0.0)
    reports = []
    for F in expansions:
        rep = theorem35_bound(F, targets, N_grid, m_grid)
        rows = []
        for row in rep.grid_table:
            row = dict(row)
            row["R1"] = math.sqrt(sup[row["N"]])
            row["bound"] = row["R1"] + row["R6"] + row["R2"] + (row["R3"] + row["R4"] + row["R5"])
            rows.append(row)
        best = min(range(len(rows)), key=lambda k: (rows[k]["bound"], k))
        b = rows[best]
        reports.append(CertificateReport(b["R1"], b["R2"], b["R3"], b["R4"], b["R5"], b["R6"],
                                         b["N"], b["m"], b["bound"], rows, rep.diagnostics))
    return {"R1_sup": {N: math.sqrt(v) for N, v in sup.items()}, "reports": reports}


# ---------------------------------------------------------------------------
# vector chaos


def flatten_vector_chaos(components, layout: str = "block") -> ChaosExpansion:
    """Stack ``K`` kernels ``f_k`` of orders ``r_k`` into one expansion on ``H^K``.

    Parameters
    ----------
    components : list of (int, Kernel)
        ``(r_k, f_k)`` pairs sharing ``(hdim, Hdim)``.
    layout : {"block", "interleaved"}
        Position of component ``(i, k)``: ``k*m + i`` for blocks, ``i*K + k``
        when interleaved.  The two layouts differ by a permutation.
    """
    components = list(components)
    if not components:
        raise InvalidInputError("need at least one component")
    hdim, m = components[0][1].hdim, components[0][1].Hdim
    K = len(components)
    for r, f in components:
        if (f.hdim, f.Hdim) != (hdim, m):
            raise TruncationMismatchError("vector components must share a truncation")
        if f.order != r:
            raise InvalidInputError(f"declared order {r} differs from kernel order {f.order}")
    if layout not in ("block", "interleaved"):
        raise InvalidInputError(f"unknown layout {layout!r}")
    kernels = {}
    for k, (r, f) in enumerate(components):
        pos = [k * m + i if layout == "block" else i * K + k for i in range(m)]
        z = ScalarKernel.zero(r, hdim)
        comps = kernels.get(r, [z] * (m * K))
        comps = list(comps)
        for i, c in enumerate(f.components):
            comps[pos[i]] = comps[pos[i]] + c if comps[pos[i]].nnz else c
        kernels[r] = comps
    return ChaosExpansion(hdim, m * K, {r: Kernel(c) for r, c in kernels.items()})


def layout_permutation(m: int, K: int) -> np.ndarray:
    """Permutation sending block positions to interleaved positions."""
    perm = np.empty(m * K, dtype=np.int64)
    for k in range(K):
        for i in range(m):
            perm[k * m + i] = i * K + k
    return perm


def block_diagonal(mats) -> np.ndarray:
    mats = [as_array(a) for a in mats]
    n = sum(a.shape[0] for a in mats)
    out = np.zeros((n, n))
    o = 0
    for a in mats:
        k = a.shape[0]
        out[o:o + k, o:o + k] = a
        o += k
    return out
