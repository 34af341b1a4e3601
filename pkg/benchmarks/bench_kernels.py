"""Kernel throughput: numba frame loop vs vectorised numpy, frames per second.

Usage: python3 benchmarks/bench_kernels.py [--blocks N] [--preset NAME ...]

Each preset is run as a family (all of its figure members on common draws),
the way the acceptance sweeps use the kernel. The first numba call compiles
(or loads the on-disk cache) and is excluded from the timing.
"""
import argparse
import time

import numpy as np

from frislab import kernels
from frislab._jit import HAVE_NUMBA
from frislab.harness import BLOCK_FRAMES, _factor, _variant_tables, draw_block, preset_spec

FAMILIES = {
    "fig2_256": ["fig2_256"],
    "fig3_sparse": [f"fig3_sparse_{q}" for q in ("cont", "q1", "q2", "q3")],
    "fig5": [f"fig5_k{k}" for k in (40, 80, 120, 160, 200, 240)],
    "fig6": [f"fig6_L{L}" for L in (1, 2, 3, 5, 16)],
}


def setup(names, snr_db):
    specs = [preset_spec(n) for n in names]
    base = specs[0]
    f = base.frame
    factor = _factor(base.geometry, base.correlation)
    points = f.constellation().points.astype(np.complex128)
    sigma = np.sqrt(10.0 ** (-np.asarray(snr_db, float) / 10.0))
    tables = _variant_tables(specs)
    active = np.ones((len(specs), sigma.size), bool)
    draws = lambda b: draw_block(1, b, BLOCK_FRAMES, f.n_r, f.m, base.geometry.n_tot, factor)
    return draws, points, sigma, tables, active


def bench(family, n_blocks, backend, snr_db=(-30.0, -25.0, -20.0)):
    draws, points, sigma, tables, active = setup(FAMILIES[family], snr_db)
    blocks = [draws(b) for b in range(n_blocks + 1)]
    kernels.block_errors(*blocks[0], points, sigma, *tables, active, backend=backend)  # warm-up
    t0 = time.perf_counter()
    for blk in blocks[1:]:
        kernels.block_errors(*blk, points, sigma, *tables, active, backend=backend)
    dt = time.perf_counter() - t0
    return n_blocks * BLOCK_FRAMES / dt


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--blocks", type=int, default=8)
    ap.add_argument("--preset", nargs="*", default=list(FAMILIES), choices=list(FAMILIES))
    args = ap.parse_args()
    backends = ["numpy"] + (["numba"] if HAVE_NUMBA else [])
    print(f"{'family':14s}" + "".join(f"{b:>12s}" for b in backends) + ("   speed-up" if HAVE_NUMBA else ""))
    for fam in args.preset:
        rates = [bench(fam, args.blocks, b) for b in backends]
        row = f"{fam:14s}" + "".join(f"{r:12.0f}" for r in rates)
        if HAVE_NUMBA:
            row += f"{rates[1] / rates[0]:10.1f}x"
        print(row)


if __name__ == "__main__":
    main()
