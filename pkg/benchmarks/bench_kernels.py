#!/usr/bin/env python3
"""Benchmark the hit-and-run slice kernel: numba path versus pure-numpy path.

Both paths consume the same random numbers and produce bit-identical chains,
so the comparison is purely about speed.  A second section times an
end-to-end multiblock sampling run in subprocesses with and without
``KLSLAB_DISABLE_NUMBA=1``.

Usage::

    python3 benchmarks/bench_kernels.py [--chains 32] [--steps 2000] [--dim 4]
"""
import argparse
import os
import subprocess
import sys
import time

import numpy as np

from klslab import kernels
from klslab._accel import NUMBA_ENABLED, njit
from klslab.rng import RngStream


@njit
def _logp_scalar(z):
    s = 0.0
    for i in range(z.shape[0]):
        s += abs(z[i])
    return -s


def _logp_batch(z):
    return -np.sum(np.abs(z), axis=1)


def _time_kernel(force_numpy, chains, steps, dim, repeats):
    start = np.zeros((chains, dim))
    best, out = np.inf, None
    for _ in range(repeats):
        gen = RngStream(0).generator()
        t0 = time.perf_counter()
        out = kernels.run_chains(start, gen, steps, 1, 0, 2.0, _logp_batch, _logp_scalar,
                                 force_numpy=force_numpy)
        best = min(best, time.perf_counter() - t0)
    return best, out


_E2E = """
import time
from klslab.geometry import make_lp_ball
from klslab.rng import RngStream
from klslab.samplers import product_density, sample_multiblock
t0 = time.perf_counter()
batch = sample_multiblock(product_density(1, 2, "exp"), [make_lp_ball(3, 2)] * 2, 1, {count},
                          RngStream(0), min_ess=100)
print(time.perf_counter() - t0, batch.provenance.extra["jit"])
"""


def _time_end_to_end(disable, count):
    env = dict(os.environ)
    env.pop("KLSLAB_DISABLE_NUMBA", None)
    if disable:
        env["KLSLAB_DISABLE_NUMBA"] = "1"
    res = subprocess.run([sys.executable, "-c", _E2E.format(count=count)], env=env, capture_output=True,
                         text=True, check=True)
    seconds, jit = res.stdout.split()
    return float(seconds), jit


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--chains", type=int, default=32)
    parser.add_argument("--steps", type=int, default=2000)
    parser.add_argument("--dim", type=int, default=4)
    parser.add_argument("--repeats", type=int, default=3)
    parser.add_argument("--count", type=int, default=20000, help="draws for the end-to-end run")
    args = parser.parse_args(argv)

    print(f"hit-and-run kernel: {args.chains} chains x {args.steps} steps in R^{args.dim}")
    t_np, out_np = _time_kernel(True, args.chains, args.steps, args.dim, args.repeats)
    print(f"  numpy : {t_np:8.3f} s")
    if NUMBA_ENABLED:
        _time_kernel(False, args.chains, 2, args.dim, 1)  # compile
        t_jit, out_jit = _time_kernel(False, args.chains, args.steps, args.dim, args.repeats)
        print(f"  numba : {t_jit:8.3f} s   speedup x{t_np / t_jit:.1f}   "
              f"bit-identical: {np.array_equal(out_np, out_jit)}")
    else:
        print("  numba : disabled (KLSLAB_DISABLE_NUMBA is set)")

    print(f"end-to-end multiblock sampling, {args.count} draws (fresh interpreter, compile time included)")
    for disable in (True, False):
        seconds, jit = _time_end_to_end(disable, args.count)
        label = "numpy" if disable else "numba"
        print(f"  {label} : {seconds:8.3f} s   (jit={jit})")


if __name__ == "__main__":
    main()
