"""Backend selection for the monomial evaluator.

The compiled extension is preferred; set ``CHAOSCERT_PURE=1`` to force the
numpy fallback.  Both produce the same values up to rounding order.
"""
import os

from . import _fallback

try:
    from . import _accel
except ImportError:  # extension not built
    _accel = None

BACKENDS = {"python": _fallback.eval_monomials}
if _accel is not None:
    BACKENDS["cython"] = _accel.eval_monomials

if os.environ.get("CHAOSCERT_PURE", "") == "1" or _accel is None:
    BACKEND = "python"
else:
    BACKEND = "cython"

_eval = BACKENDS[BACKEND]


def eval_monomials(xi, idx, mult, max_deg, backend=None):
    fn = _eval if backend is None else BACKENDS[backend]
    return fn(xi, idx, mult, int(max_deg))
