#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-Python fallback.

The two backends implement identical arithmetic (results are bit-equal);
this script measures the speed difference on the hot loops.

Usage: python benchmarks/bench_backends.py [--steps N] [--batch M] [--chain K]
"""

import argparse
import time

import numpy as np

from tangentstat._kernels import _fallback

try:
    from tangentstat._kernels import _core
except ImportError:
    _core = None

KIND_DW = 2
PARAMS = np.array([1.0])


def timeit(fn, *args, repeat=3):
    best = float("inf")
    result = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        result = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, result


def bench(args):
    rng = np.random.default_rng(0)
    q0, qt0 = np.array([0.4]), np.array([1.1])
    batch_q = rng.uniform(-1, 1, (args.batch, 1))
    batch_qt = rng.uniform(-1, 1, (args.batch, 1))
    m0 = np.eye(2)
    normals = rng.standard_normal((args.chain, 2))
    uniforms = rng.random(args.chain)

    cases = [
        ("rk4_path", "rk4_path",
         (KIND_DW, PARAMS, q0, qt0, 1e-3, args.steps)),
        ("rk4_advect", "rk4_advect",
         (KIND_DW, PARAMS, batch_q, batch_qt, 1e-3, args.steps // 10)),
        ("rk4_tangent", "rk4_tangent",
         (KIND_DW, PARAMS, q0, qt0, m0, 1e-3, args.steps)),
        ("metropolis_chain", "metropolis_chain",
         (KIND_DW, PARAMS, 1.0, q0, qt0, np.array([1.0]), np.array([1.0]),
          normals, uniforms, 1000, 1)),
    ]

    print(f"{'kernel':<18} {'python':>10} {'compiled':>10} {'speedup':>9}  match")
    for label, name, call_args in cases:
        t_py, r_py = timeit(getattr(_fallback, name), *call_args)
        if _core is None:
            print(f"{label:<18} {t_py * 1e3:>8.1f}ms {'n/a':>10} {'n/a':>9}")
            continue
        t_c, r_c = timeit(getattr(_core, name), *call_args)
        outs_py = r_py if isinstance(r_py, tuple) else (r_py,)
        outs_c = r_c if isinstance(r_c, tuple) else (r_c,)
        match = all(np.array_equal(a, b) for a, b in zip(outs_py, outs_c))
        print(f"{label:<18} {t_py * 1e3:>8.1f}ms {t_c * 1e3:>8.1f}ms "
              f"{t_py / t_c:>8.1f}x  {'bitwise' if match else 'DIFFER'}")
    if _core is None:
        print("\ncompiled backend not built; run `python setup.py build_ext"
              " --inplace` first")


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--steps", type=int, default=100_000,
                        help="RK4 steps per trajectory")
    parser.add_argument("--batch", type=int, default=512,
                        help="points advected together")
    parser.add_argument("--chain", type=int, default=500_000,
                        help="Metropolis chain length")
    bench(parser.parse_args())
