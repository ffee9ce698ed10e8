"""Benchmark the compiled kernels against the pure NumPy fallback.

Times the pieces that dominate real workloads (per-draw root solving, the
conditional-tail sweep behind the CI inversion) and two end-to-end calls,
then prints a table with speedups.  Run from the repository root:

    python benchmarks/bench_backends.py [--B 10000] [--repeats 5]
"""
import argparse
import time

import numpy as np

from rmsequiv import kernels
from rmsequiv.data import Hypothesis, SummaryStats
from rmsequiv.gt import GtConfig, build_ensemble, gt_ci, gt_pvalue
from rmsequiv.streams import RandomStream

OXIMETRY = SummaryStats(
    m=(9, 10, 10, 10, 5, 10, 10, 10, 10, 10, 10, 10, 2, 10, 10, 10),
    ybar=(-0.026, 0.447, 0.083, -0.103, -2.587, -0.61, 0.04, -0.593,
          0.963, 0.643, -0.2, -1.337, -4.333, -2.807, 0.563, -0.797),
    sse=221.037,
)


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench(B, repeats):
    s = OXIMETRY
    ybar = s.ybar_array()
    m = s.m_array()
    gen = RandomStream(7).generator()
    qw = s.sse / gen.chisquare(s.total_n - s.n, size=B)
    target = gen.chisquare(s.n - 1, size=B)

    cfg = GtConfig(B=B, seed=123)
    hyp = Hypothesis(rho0=3.0, alpha=0.10)
    ens = build_ensemble(s, B, RandomStream(cfg.seed))

    cases = {
        "solve_qb_batch": lambda k: k.solve_qb_batch(ybar, m, qw, target),
        "exceed_batch x20": lambda k: [k.exceed_batch(ens.s, ens.sum_wt, ens.ytilde, q)
                                       for q in np.linspace(1.0, 12.0, 20)],
    }

    rows = []
    for name, fn in cases.items():
        timings = {}
        for backend in kernels.available_backends():
            kernels.set_backend(backend)
            timings[backend] = best_of(lambda: fn(kernels.get_kernels()), repeats)
        rows.append((name, timings))

    for name, call in (("gt_pvalue (p + CI + fit)", lambda: gt_pvalue(s, hyp, cfg)),
                       ("gt_ci", lambda: gt_ci(s, 0.10, cfg))):
        timings = {}
        for backend in kernels.available_backends():
            kernels.set_backend(backend)
            timings[backend] = best_of(call, repeats)
        rows.append((name, timings))

    print(f"\noximetry data, B={B}, best of {repeats} runs")
    have_cy = "cython" in kernels.available_backends()
    header = f"{'case':28s} {'python':>10s}"
    if have_cy:
        header += f" {'cython':>10s} {'speedup':>8s}"
    print(header)
    for name, t in rows:
        line = f"{name:28s} {t['python']*1e3:9.2f}ms"
        if have_cy:
            line += f" {t['cython']*1e3:9.2f}ms {t['python']/t['cython']:7.1f}x"
        print(line)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--B", type=int, default=10_000)
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()
    before = kernels.active_backend()
    try:
        bench(args.B, args.repeats)
    finally:
        kernels.set_backend(before)


if __name__ == "__main__":
    main()
