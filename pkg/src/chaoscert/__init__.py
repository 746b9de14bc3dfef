"""Finite-truncation certificates for Hilbert-space-valued Wiener chaos."""

__version__ = "0.1.0"

from .exceptions import (InvalidInputError, NondegeneracyWarning, RankViolationError,
                         SymmetryError, TruncationMismatchError)
from .hilbert import OperatorMatrix, Truncation, schatten_norm, singular_values
from .tensors import ChaosExpansion, Kernel, ScalarKernel, contract, symmetrize
from .chaos import (eval_expansion, eval_multiple_integral, exact_covariance,
                    exact_fourth_excess, gamma_sample, malliavin_derivative_eval)
from .certificates import (CertificateReport, TargetSpec, constant_cp, constant_cpq,
                           constant_cpqchi, fixed_chaos_bound, flatten_vector_chaos,
                           gaussian_pair_bound, r_terms, theorem35_bound)
from ._backend import BACKEND

__all__ = [
    "BACKEND", "CertificateReport", "ChaosExpansion", "InvalidInputError", "Kernel",
    "NondegeneracyWarning", "OperatorMatrix", "RankViolationError", "ScalarKernel",
    "SymmetryError", "TargetSpec", "Truncation", "TruncationMismatchError",
    "constant_cp", "constant_cpq", "constant_cpqchi", "contract", "eval_expansion",
    "eval_multiple_integral", "exact_covariance", "exact_fourth_excess", "fixed_chaos_bound",
    "flatten_vector_chaos", "gamma_sample", "gaussian_pair_bound",
    "malliavin_derivative_eval", "r_terms", "schatten_norm", "singular_values",
    "symmetrize", "theorem35_bound",
]
