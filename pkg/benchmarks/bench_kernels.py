"""Stencil kernel timing: numba cell loop against the vectorized numpy path.

    python3 benchmarks/bench_kernels.py [--repeat 50]

The numpy path is what ``DROPEVAP_DISABLE_NUMBA=1`` selects at import time.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from dropevap import kernels
from dropevap.discretization import GridGeometry
from dropevap.flowfields import Stokes
from dropevap.geometry import build_grid


def inputs(n_theta, n_r):
    geo = GridGeometry(build_grid(n_theta, n_r, 50.0, 1.08))
    Fr, Ft = geo.face_fluxes(Stokes(0.8), 6.2e-4, -1e-6)
    vdt = geo.vol / 1.0
    return (2.6e-5 / 6.2e-4**2, geo.Gr, geo.Gt, geo.Gs, geo.Go,
            np.ascontiguousarray(Fr), np.ascontiguousarray(Ft), vdt, True)


def best_of(fn, args, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=50)
    args = ap.parse_args(argv)
    print(f"numba available: {kernels.HAVE_NUMBA}; active backend: {kernels.BACKEND}")
    print(f"{'grid':>10} {'numpy_ms':>10} {'numba_ms':>10} {'speedup':>8} {'rel_diff':>10}")
    for nt, nr in ((16, 32), (32, 64), (64, 128), (128, 256)):
        a = inputs(nt, nr)
        t_np = best_of(kernels.stencil_numpy, a, args.repeat)
        if kernels.stencil_numba is not None:
            kernels.stencil_numba(*a)  # compile / load cache outside the timing
            t_nb = best_of(kernels.stencil_numba, a, args.repeat)
            diff = max(float(np.max(np.abs(x - y)) / max(np.max(np.abs(x)), 1e-300))
                       for x, y in zip(kernels.stencil_numpy(*a), kernels.stencil_numba(*a)))
            print(f"{nt:>4}x{nr:<5} {1e3 * t_np:>10.3f} {1e3 * t_nb:>10.3f} "
                  f"{t_np / t_nb:>8.2f} {diff:>10.2e}")
        else:
            print(f"{nt:>4}x{nr:<5} {1e3 * t_np:>10.3f} {'n/a':>10} {'n/a':>8} {'n/a':>10}")


if __name__ == "__main__":
    main()
