import itertools, math
import numpy as np
from numpy.polynomial.hermite_e import hermeval, hermegauss

def he(k, x):
    c = np.zeros(k + 1); c[k] = 1.0
    return hermeval(x, c)

def ip_loop(dense, x):
    """I_p by looping over every ordered tuple."""
    p = dense.ndim
    tot = 0.0
    for t in itertools.product(range(dense.shape[0]), repeat=p):
        v = dense[t]
        if v == 0: continue
        prod = 1.0
        for j in set(t):
            prod *= he(t.count(j), x[j])
        tot += v * prod
    return tot

def quad_moments(dense, npts=12):
    d = dense.shape[0]
    x, w = hermegauss(npts); w = w / w.sum()
    m2 = m4 = 0.0
    for idx in itertools.product(range(npts), repeat=d):
        pt = x[list(idx)]; wt = np.prod(w[list(idx)])
        v = ip_loop(dense, pt)
        m2 += wt * v * v; m4 += wt * v ** 4
    return m2, m4


# ---- certificate oracle: dense tensors and plain loops over (i, j) ----

def dense_contraction_norm(f, r):
    """||f (x)_r f|| from a dense symmetric array."""
    p = f.ndim
    c = np.tensordot(f, f, axes=(list(range(p - r, p)), list(range(r))))
    return float(np.sqrt(np.sum(c * c)))


def c_p(p, r):
    return p * math.factorial(r - 1) * math.comb(p - 1, r - 1) ** 2 * math.sqrt(math.factorial(2 * p - 2 * r))


def c_pq(p, q):
    return math.factorial(p) ** 2 * math.comb(q - 1, p - 1) ** 2 * math.factorial(q - p)


def c_pqchi(p, q, chi):
    return (p * p / 2) * math.factorial(chi - 1) ** 2 * math.comb(p - 1, chi - 1) ** 2 \
        * math.comb(q - 1, chi - 1) ** 2 * math.factorial(p + q - 2 * chi)


def oracle_terms(dense, targets, dim, N, M):
    """dense: {r: list of arrays (one per component)}; targets: {r: matrix}."""
    fact = math.factorial
    cov = {r: np.array([[fact(r) * np.sum(a * b) for b in fs] for a in fs]) for r, fs in dense.items()}
    z = np.zeros((dim, dim))
    R1 = math.sqrt(sum(np.trace(c) for r, c in cov.items() if r > N))
    R2 = 0.0
    for r in range(1, N + 1):
        R2 += 0.5 * np.sum(np.linalg.svd(cov.get(r, z) - targets.get(r, z), compute_uv=False))

    def f(l, i):
        return dense[l][i] if l in dense else None

    def cnorm(l, i, r):
        a = f(l, i)
        return 0.0 if a is None else dense_contraction_norm(a, r)

    def sq(l, i):
        a = f(l, i)
        return 0.0 if a is None else float(np.sum(a * a))

    S = 0.0
    for i in range(M):
        for j in range(M):
            for l in range(1, N + 1):
                S += 0.5 * sum(c_p(l, chi) ** 2 * (cnorm(l, i, l - chi) ** 2 + cnorm(l, j, l - chi) ** 2)
                               for chi in range(1, l))
            for l1 in range(1, N + 1):
                for l2 in range(1, N + 1):
                    if l1 == l2 or l1 not in dense or l2 not in dense:
                        continue
                    if l1 < l2:
                        S += c_pq(l1, l2) * sq(l1, i) * cnorm(l2, j, l2 - l1)
                    else:
                        S += c_pq(l2, l1) * sq(l2, j) * cnorm(l1, i, l1 - l2)
                    lo, hi = min(l1, l2), max(l1, l2)
                    for chi in range(1, lo):
                        S += c_pqchi(lo, hi, chi) * (cnorm(l1, i, l1 - chi) ** 2 + cnorm(l2, j, l2 - chi) ** 2)
    R3 = math.sqrt(M) * N * math.sqrt(S)
    tail = sum(np.sum(np.diag(c)[M:]) for r, c in cov.items() if r <= N)
    R4 = (N + 2) / 2 * tail
    R5 = math.sqrt(sum(np.trace(c) for c in cov.values())) * math.sqrt((N + 3) * tail)
    R6 = 0.5 * sum(np.trace(t) for r, t in targets.items() if r > N)
    return {"R1": R1, "R2": R2, "R3": R3, "R4": R4, "R5": R5, "R6": R6}
