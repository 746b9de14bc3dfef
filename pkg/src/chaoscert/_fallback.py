"""Pure numpy Hermite-monomial evaluator (used when the extension is absent)."""
import numpy as np


def hermite_table(x: np.ndarray, max_deg: int) -> np.ndarray:
    """Probabilists' Hermite values ``He_0..He_max_deg`` stacked on a new last axis."""
    x = np.asarray(x, dtype=float)
    out = np.empty(x.shape + (max_deg + 1,))
    out[..., 0] = 1.0
    if max_deg >= 1:
        out[..., 1] = x
    for k in range(2, max_deg + 1):
        out[..., k] = x * out[..., k - 1] - (k - 1) * out[..., k - 2]
    return out


def eval_monomials(xi, idx, mult, max_deg):
    """``out[s, t] = prod_k He_{mult[t,k]}(xi[s, idx[t,k]])``."""
    xi = np.asarray(xi, dtype=float)
    n = xi.shape[0]
    T, P = idx.shape
    out = np.ones((n, T))
    if n == 0 or T == 0:
        return out
    H = hermite_table(xi, max_deg)
    for k in range(P):
        col = mult[:, k]
        if not np.any(col):
            continue
        out *= H[:, idx[:, k], col]
    return out
