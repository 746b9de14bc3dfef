"""Compare the compiled and numpy monomial evaluators.

Usage: python3 benchmarks/bench_backends.py [--samples N] [--repeat R]
"""
import argparse
import time

import numpy as np

from chaoscert._backend import BACKENDS
from chaoscert.chaos import build_table, derivative_table
from chaoscert.corpus import random_component_kernel
from chaoscert.sampling import shard_rng
from chaoscert.tensors import ChaosExpansion


def cases(seed=0):
    rng = shard_rng(seed, 0, stream=99)
    for p, d, m in ((2, 6, 3), (3, 6, 3), (4, 6, 2), (4, 10, 2)):
        F = ChaosExpansion.single(random_component_kernel(rng, p, d, m, density=1.0))
        yield f"p={p} d={d} m={m}", build_table(F)


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--samples", type=int, default=100_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    xi_rng = np.random.default_rng(1)
    names = [b for b in ("python", "cython") if b in BACKENDS]
    print(f"{'case':<18}{'table':>8}{'monomials':>11}" + "".join(f"{b:>12}" for b in names)
          + ("     speedup" if len(names) == 2 else ""))
    for label, table in cases():
        for kind, t in (("value", table), ("deriv", derivative_table(table))):
            xi = xi_rng.standard_normal((args.samples, t.hdim))
            secs = [best_of(lambda b=b: t.monomials(xi, backend=b), args.repeat) for b in names]
            line = f"{label:<18}{kind:>8}{t.size:>11}" + "".join(f"{s:>11.4f}s" for s in secs)
            if len(secs) == 2:
                ref = t.monomials(xi[:1000], backend="python")
                got = t.monomials(xi[:1000], backend="cython")
                assert np.allclose(ref, got, rtol=1e-12, atol=1e-12)
                line += f"{secs[0] / secs[1]:>11.1f}x"
            print(line)


if __name__ == "__main__":
    main()
