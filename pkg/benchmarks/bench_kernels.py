"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import timeit

import numpy as np

from qrecover import _kernels_py
from qrecover.linalg import _offsets
from qrecover.states import make_rng, random_density_matrix

try:
    from qrecover import _kernels
except ImportError:
    _kernels = None


def cases(rng):
    for dims, keep in (((2, 2, 2), (0, 2)), ((4, 4, 4), (0,)), ((2,) * 6, (0, 1, 2)), ((8, 8), (1,))):
        d = int(np.prod(dims))
        m = np.ascontiguousarray(random_density_matrix(rng, d))
        traced = tuple(i for i in range(len(dims)) if i not in keep)
        args = (m, _offsets(dims, keep), _offsets(dims, traced))
        yield f"ptrace {'x'.join(map(str, dims))} keep {keep}", "ptrace_offsets", args
    for n in (16, 256, 4096):
        eigs = np.ascontiguousarray(np.sort(rng.dirichlet(np.ones(n))))
        yield f"entropy n={n}", "entropy_bits", (eigs, 1e-15)
    for nx, nu in ((4, 3), (8, 8), (64, 32)):
        p, q = rng.dirichlet(np.ones(nx)), rng.dirichlet(np.ones(nx))
        t = np.ascontiguousarray(rng.dirichlet(np.ones(nu), size=nx).T)
        yield f"recovery terms {nx}->{nu}", "theorem5_terms", (p, q, t)


def best_time(fn, args, repeat):
    timer = timeit.Timer(lambda: fn(*args))
    n, _ = timer.autorange()
    return min(timer.repeat(repeat, n)) / n


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if _kernels is None:
        print("compiled kernels not built; only the python backend is available")
    print(f"{'case':34s} {'python (us)':>12s} {'cython (us)':>12s} {'speedup':>8s}")
    for name, fname, fargs in cases(make_rng(0)):
        tp = best_time(getattr(_kernels_py, fname), fargs, args.repeat) * 1e6
        if _kernels is None:
            print(f"{name:34s} {tp:12.2f} {'-':>12s} {'-':>8s}")
            continue
        tc = best_time(getattr(_kernels, fname), fargs, args.repeat) * 1e6
        print(f"{name:34s} {tp:12.2f} {tc:12.2f} {tp / tc:7.1f}x")


if __name__ == "__main__":
    main()
