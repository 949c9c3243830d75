"""Benchmark the numba kernels against the pure-numpy fallback.

Times the batched gradient kernels at a few batch sizes, plus one full
optimizer run per backend, and checks that the two backends agree to
floating-point reduction error.

Usage: python3 benchmarks/bench_backends.py [--repeats N]
"""

import argparse
import time

import numpy as np

from stimulus_moo import kernels
from stimulus_moo.backend import HAS_NUMBA
from stimulus_moo.optimizers import OptimizerConfig, run
from stimulus_moo.problems import make_builtin


def time_call(fn, args, repeats):
    fn(*args)  # warm up (JIT compile on the numba path)
    best = np.inf
    for _ in range(repeats):
        start = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - start)
    return best


def bench_kernels(repeats):
    rng = np.random.default_rng(0)
    n, d_in, h, d = 4096, 10, 8, 3
    curv = rng.uniform(0.5, 2.0, size=(n, d))
    anchors = rng.normal(size=(n, d))
    feats = rng.normal(size=(n, d_in))
    labels = (rng.normal(size=n) > 0).astype(np.float64)
    v, w = rng.normal(size=d_in), rng.normal(size=d_in)
    wmat, wh = rng.normal(size=(h, d_in)), rng.normal(size=h)
    x = rng.normal(size=d)

    cases = []
    for batch in (32, 256, 4096):
        idx = np.sort(rng.choice(n, size=batch, replace=False)).astype(np.int64)
        cases.append((f"quad_grad_mean[B={batch}]", "quad_grad_mean", (curv, anchors, idx, x)))
        cases.append((f"lin2_grad_mean[B={batch}]", "lin2_grad_mean", (feats, labels, idx, v, w, 0.1)))
        cases.append((f"tanh2_grad_mean[B={batch}]", "tanh2_grad_mean", (feats, labels, idx, wmat, wh, 0.1)))

    print(f"{'kernel':28s} {'numpy':>12s} {'numba':>12s} {'speedup':>9s}  agreement")
    for name, key, args in cases:
        np_fn = getattr(kernels, key + "_np")
        t_np = time_call(np_fn, args, repeats)
        if not HAS_NUMBA:
            print(f"{name:28s} {t_np * 1e6:10.1f}us {'-':>12s} {'-':>9s}")
            continue
        nb_fn = getattr(kernels, key + "_nb")
        t_nb = time_call(nb_fn, args, repeats)
        a, b = np_fn(*args), nb_fn(*args)
        if isinstance(a, tuple):
            diff = max(float(np.max(np.abs(np.asarray(x) - np.asarray(y)))) for x, y in zip(a, b))
        else:
            diff = float(np.max(np.abs(a - b)))
        print(
            f"{name:28s} {t_np * 1e6:10.1f}us {t_nb * 1e6:10.1f}us {t_np / t_nb:8.2f}x"
            f"  max|diff|={diff:.2e}"
        )


def bench_run():
    problem = make_builtin("synthetic_two_task", 0, {"n": 1024, "trunk": "tanh"})
    cfg = OptimizerConfig(T=500, eta=0.5, seed=0, metric_cadence=64)
    print(f"\n{'stimulus run (T=500, tanh, n=1024)':40s}")
    for backend in ("numpy", "numba") if HAS_NUMBA else ("numpy",):
        previous = kernels.set_backend(backend)
        try:
            run(problem, "stimulus", cfg)  # warm
            start = time.perf_counter()
            record = run(problem, "stimulus", cfg)
            elapsed = time.perf_counter() - start
        finally:
            kernels.set_backend(previous)
        print(f"  {backend:8s} {elapsed:8.3f}s  final_stationarity={record.final_stationarity:.3e}")


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=7)
    args = parser.parse_args()
    if not HAS_NUMBA:
        print("numba not importable; timing the numpy fallback only\n")
    bench_kernels(args.repeats)
    bench_run()


if __name__ == "__main__":
    main()
