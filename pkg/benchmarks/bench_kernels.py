"""Benchmark the compiled kernel backend against the pure-numpy fallback.

Times the two hot Monte Carlo loops on representative workloads and checks
that both backends produce bit-identical output.  Run as:

    python benchmarks/bench_kernels.py [--quick]
"""

import argparse
import time

import numpy as np

from fwspde.kernels import available_backends
from fwspde.rng import path_seeds


def _time(fn, repeats=3):
    best = np.inf
    out = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def bench_batch(backends, n_paths, n_steps, m, repeats):
    rng = np.random.default_rng(0)
    a = np.exp(-rng.uniform(0.5, 4.0, m) * 1e-2)
    sc = rng.uniform(0.05, 0.2, m)
    x0 = np.zeros(m)
    ref = rng.normal(size=(n_steps + 1, m)) * 0.05
    rec = np.array([n_steps], dtype=np.int64)
    seeds = path_seeds(7, 1, 0, n_paths)
    results = {}
    times = {}
    for name, mod in backends.items():
        times[name], results[name] = _time(
            lambda mod=mod: mod.batch_paths(a, sc, x0, None, ref, None, rec,
                                            seeds, n_steps), repeats)
    return times, results


def bench_exit(backends, n_paths, max_steps, repeats):
    a = np.array([np.exp(-1e-3)])
    sc = np.array([np.sqrt(0.3) * np.sqrt(-np.expm1(-2e-3) / 2.0)])
    x0 = np.zeros(1)
    seeds = path_seeds(11, 2, 0, n_paths)
    results = {}
    times = {}
    for name, mod in backends.items():
        times[name], results[name] = _time(
            lambda mod=mod: mod.exit_paths(a, sc, x0, 1.0, max_steps, seeds),
            repeats)
    return times, results


def _identical(results):
    names = sorted(results)
    if len(names) < 2:
        return "n/a (single backend)"
    base = results[names[0]]
    for name in names[1:]:
        for x, y in zip(base, results[name]):
            if not np.array_equal(x, y):
                return "MISMATCH"
    return "bit-identical"


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--quick", action="store_true",
                        help="smaller workloads, single repeat")
    args = parser.parse_args()
    repeats = 1 if args.quick else 3
    backends = available_backends()
    print(f"backends: {', '.join(backends)}")

    workloads = [
        ("tube batch 1e5 x 140 steps x 2 modes",
         lambda: bench_batch(backends, 10000 if args.quick else 100000,
                             140, 2, repeats)),
        ("tube batch 2e4 x 1000 steps x 8 modes",
         lambda: bench_batch(backends, 2000 if args.quick else 20000,
                             1000, 8, repeats)),
        ("exit sampling 200 paths, ~15k steps each",
         lambda: bench_exit(backends, 200,
                            30000 if args.quick else 300000, repeats)),
    ]
    header = f"{'workload':44s} " + " ".join(f"{n:>10s}" for n in backends)
    print(header + "    speedup  outputs")
    for label, fn in workloads:
        times, results = fn()
        cols = " ".join(f"{times[n]:9.3f}s" for n in backends)
        if len(times) == 2:
            speedup = times["python"] / times["cython"]
            extra = f"{speedup:8.1f}x"
        else:
            extra = "     n/a"
        print(f"{label:44s} {cols} {extra}  {_identical(results)}")


if __name__ == "__main__":
    main()
