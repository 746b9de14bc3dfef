"""Seeded test corpus: random symmetric kernels and expansions with targets."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .chaos import order_covariances
from .certificates import TargetSpec
from .exceptions import InvalidInputError
from .gallery import example11_pair, remark315_sequence
from .hilbert import OperatorMatrix
from .sampling import shard_rng
from .tensors import ChaosExpansion, Kernel, ScalarKernel

CORPUS_STREAM = 21


def random_kernel(rng, order: int, hdim: int, density: float = 0.6,
                  normalize: bool = True) -> ScalarKernel:
    """Random symmetric kernel over a random subset of orbit representatives.

    With ``normalize`` the kernel is scaled so that ``E I_p(f)^2 = p! ||f||^2 = 1``.
    """
    if order < 1 or hdim < 1:
        raise InvalidInputError("order and hdim must be positive")
    rows = np.array(list(itertools.combinations_with_replacement(range(hdim), order)),
                    dtype=np.int64)
    keep = rng.random(rows.shape[0]) < density
    if not keep.any():
        keep[rng.integers(rows.shape[0])] = True
    vals = rng.standard_normal(int(keep.sum()))
    f = ScalarKernel.from_symmetric(order, hdim, rows[keep], vals)
    if normalize:
        f = f * (1.0 / (math.sqrt(math.factorial(order)) * f.norm()))
    return f


def random_component_kernel(rng, order: int, hdim: int, Hdim: int, density: float = 0.6,
                            scale: float = 1.0) -> Kernel:
    return Kernel([random_kernel(rng, order, hdim, density) * (scale / math.sqrt(Hdim))
                   for _ in range(Hdim)])


def kernel_corpus(seed: int = 0, size: int = 54, orders=(2, 3, 4), max_hdim: int = 6) -> list:
    """``size`` random kernels cycling through ``orders`` and ``hdim = 1..max_hdim``."""
    rng = shard_rng(seed, 0, stream=CORPUS_STREAM)
    out = []
    for k in range(size):
        p = orders[k % len(orders)]
        d = 1 + (k // len(orders)) % max_hdim
        out.append(random_kernel(rng, p, d))
    return out


def orthogonality_pairs(seed: int = 0, hdim: int = 4) -> list:
    """Pairs ``(f, g)`` of different orders on a shared ``hdim``."""
    rng = shard_rng(seed, 0, stream=CORPUS_STREAM + 1)
    return [(random_kernel(rng, p, hdim), random_kernel(rng, q, hdim))
            for p, q in ((1, 2), (1, 3), (2, 3), (2, 4), (3, 4))]


@dataclass
class CorpusCase:
    """An expansion with a per-order Gaussian target."""

    name: str
    F: ChaosExpansion
    targets: TargetSpec
    notes: dict = field(default_factory=dict)

    @property
    def T_Z(self) -> np.ndarray:
        return self.targets.aggregate

    def to_json(self) -> dict:
        return {"name": self.name, "expansion": self.F.to_json(),
                "targets": self.targets.to_json(), "notes": self.notes}


def _matching_targets(F: ChaosExpansion, extra=None) -> TargetSpec:
    covs = order_covariances(F)
    per = {r: OperatorMatrix(c, symmetric=True) for r, c in covs.items()}
    if extra is not None:
        r0 = min(per)
        per[r0] = per[r0] + extra
    return TargetSpec(per, F.Hdim)


def certificate_corpus(seed: int = 0) -> list[CorpusCase]:
    """Simulable cases with Gaussian targets used by the sandwich runs and the CLI."""
    rng = shard_rng(seed, 0, stream=CORPUS_STREAM + 2)
    cases = []

    A = rng.standard_normal((3, 4)) / 2
    F1 = ChaosExpansion.single(Kernel.from_matrix(A))
    cases.append(CorpusCase("gauss_match", F1, _matching_targets(F1)))
    cases.append(CorpusCase("gauss_shifted", F1,
                            _matching_targets(F1, OperatorMatrix.diag([0.5, 0.0, 0.25]))))

    F2 = ChaosExpansion.single(random_component_kernel(rng, 2, 4, 2))
    cases.append(CorpusCase("second_chaos", F2, _matching_targets(F2)))

    F3 = ChaosExpansion.single(random_component_kernel(rng, 3, 3, 2, scale=0.7))
    cases.append(CorpusCase("third_chaos", F3, _matching_targets(F3)))

    mixed = ChaosExpansion(4, 2, {1: Kernel.from_matrix(rng.standard_normal((2, 4)) / 2),
                                  2: random_component_kernel(rng, 2, 4, 2, scale=0.5)})
    cases.append(CorpusCase("mixed_orders", mixed, _matching_targets(mixed)))

    sq = ChaosExpansion.single(Kernel.single(ScalarKernel.basis_tensor((0, 0), 1), 0, 1))
    cases.append(CorpusCase("square_fixed", sq, TargetSpec({2: OperatorMatrix.diag([2.0])}),
                            {"bound": 2 * math.sqrt(8)}))

    F, TZ, _ = remark315_sequence(2.0, 0.75, 3)
    cases.append(CorpusCase("remark315_n3", F, TargetSpec({1: TZ})))

    T1, T2, ex = example11_pair()
    cases.append(CorpusCase("example11_cross", ex.objects["Z1"], TargetSpec({1: T2}),
                            {"pair_bound": 1.0}))
    return cases


def corpus_case(name: str, seed: int = 0) -> CorpusCase:
    for c in certificate_corpus(seed):
        if c.name == name:
            return c
    raise InvalidInputError(f"no corpus case named {name!r}")
