"""Time the numba and numpy kernel backends side by side.

    python3 benchmarks/bench_backends.py [--case ieee14-class] [--samples 500]

Reports the mean wall time per SCED solve and per region lookup for each
backend.  The first call of every numba kernel is excluded (JIT warm-up).
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from crplme import _kernels, cases, lme, mpp
from crplme.dispatch import SCEDSolver


def _mean_time(fn, items, warmup=5):
    for it in items[:warmup]:
        fn(it)
    t0 = time.perf_counter()
    for it in items:
        fn(it)
    return (time.perf_counter() - t0) / len(items)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--case", default="ieee14-class", choices=sorted(cases.CASES))
    ap.add_argument("--samples", type=int, default=500)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    case = cases.CASES[args.case]()
    db = mpp.enumerate_regions(case)
    loads = list(db.polytope.sample(np.random.default_rng(args.seed), args.samples))
    backends = [_kernels.numpy_kernels]
    if _kernels.numba_kernels is not None:
        backends.append(_kernels.numba_kernels)

    print(f"case {args.case}: {len(db.regions)} regions, {args.samples} loads")
    print(f"{'backend':<8} {'solve_us':>10} {'locate_us':>10}")
    for k in backends:
        solver = SCEDSolver(case, kernels=k)
        t_solve = _mean_time(solver.solve, loads)
        t_loc = _mean_time(lambda l: lme.locate(db, l, kernels=k), loads)
        print(f"{k.name:<8} {t_solve * 1e6:>10.1f} {t_loc * 1e6:>10.2f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
