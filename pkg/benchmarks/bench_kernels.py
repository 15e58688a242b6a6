"""Compiled kernels against the numpy fallback on the stochastic-sea hot loop.

    python benchmarks/bench_kernels.py [--seeds 500] [--n 5000] [--repeat 3]

Prints seconds per run for ``iterate`` and ``ftle`` under each backend and
the largest FTLE difference between them.
"""
import argparse
import time

import numpy as np

from collarcap import _kernels_py, anosov
from collarcap import atlas as at

try:
    from collarcap import _kernels as _compiled
except ImportError:
    _compiled = None


def best_of(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=500)
    ap.add_argument("--n", type=int, default=5000)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    s = at.assemble(at.SurfaceSpec(kind="sphere", weight_samples=100_000))
    b = at.sample(s, args.seeds, np.random.default_rng(args.seed), "stochastic")
    d = s.direction[b.sheet].astype(float)
    common = (b.kind, b.hole, b.x, b.y, d, args.n, s.epsilon, anosov.LAMBDA, s.frame)

    backends = [("python", _kernels_py)]
    if _compiled is not None:
        backends.append(("cython", _compiled))
    else:
        print("compiled kernels not built; timing the fallback only")

    results = {}
    timings = {}
    print(f"{args.seeds} seeds x {args.n} steps, best of {args.repeat}")
    for name, mod in backends:
        t_it, _ = best_of(lambda: mod.iterate(*common), args.repeat)
        t_ft, res = best_of(lambda: mod.ftle(*common), args.repeat)
        results[name] = np.asarray(res[0])
        timings[name] = t_ft
        rate = args.seeds * args.n / t_ft
        print(f"{name:>7}  iterate {t_it:8.3f} s   ftle {t_ft:8.3f} s   ({rate:.3g} point-steps/s)")
    if len(results) == 2:
        diff = np.max(np.abs(results["python"] - results["cython"]))
        print(f"speedup (ftle): {timings['python'] / timings['cython']:.1f}x")
        print(f"max |ftle_python - ftle_cython| = {diff:.3e}")
        print(f"median ftle: python {np.median(results['python']):.10f}, cython {np.median(results['cython']):.10f}")


if __name__ == "__main__":
    main()
