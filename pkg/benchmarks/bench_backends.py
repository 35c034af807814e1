#!/usr/bin/env python3
"""Compare the compiled and pure-NumPy propagation kernels.

Usage: python benchmarks/bench_backends.py [repeats]

Times evolve_p (probability only) and grad_p (probability + exact gradient)
over the standard 2048-point grid for a range of system sizes.
"""

import sys
import time

import numpy as np

from qlandscape.backend import get_backend
from qlandscape.field import FieldSpec, TimeGrid, generate_initial_field
from qlandscape.qsys import DipoleSpec, build_system, transition_frequency


def time_call(fn, args, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    repeats = int(sys.argv[1]) if len(sys.argv) > 1 else 3
    backends = {}
    for name in ("cython", "numpy"):
        try:
            backends[name] = get_backend(name)
        except ImportError:
            print(f"backend {name}: not available")
    grid = TimeGrid(28.0, 2048)
    print(f"n_t = {grid.n_points}, repeats = {repeats} (best shown)")
    header = f"{'N':>4s} {'kernel':>8s}" + "".join(f" {n:>12s}" for n in backends)
    print(header)
    for n in (5, 10, 20, 40):
        system = build_system(n, "rotor", DipoleSpec("dropoff", 1.0, seed=7), (1, 5))
        fld = generate_initial_field(
            FieldSpec(1.0, omega_max=transition_frequency(system, 1, 5), seed=3), grid
        )
        args = (
            system.energies, system.dipole, fld.samples, grid.dt,
            system.i_index, system.f_index,
        )
        for kernel in ("evolve_p", "grad_p"):
            row = f"{n:4d} {kernel:>8s}"
            results = {}
            for name, mod in backends.items():
                results[name] = time_call(getattr(mod, kernel), args, repeats)
                row += f" {1e3 * results[name]:9.1f} ms"
            if len(results) == 2:
                row += f"   ({results['numpy'] / results['cython']:.2f}x)"
            print(row)
        # agreement check while both are loaded
        if len(backends) == 2:
            g1 = backends["cython"].grad_p(*args)[2]
            g2 = backends["numpy"].grad_p(*args)[2]
            assert np.max(np.abs(g1 - g2)) < 1e-10, "backend mismatch"


if __name__ == "__main__":
    main()
