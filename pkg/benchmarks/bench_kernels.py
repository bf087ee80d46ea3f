"""Compiled vs NumPy Strang-step kernel: wall time and agreement.

    python3 benchmarks/bench_kernels.py [--cells 4000 8000] [--steps 2000] [--repeat 3]
"""
import argparse
import time

import numpy as np

from terrace_lab import _backend, pde
from terrace_lab import nonlinearity as nl

SPECS = {
    "bistable": nl.bistable(0.25),
    "quintic": nl.quintic(0.05, 0.5, 0.75, kappa=5.0),
    "periodic-product": nl.periodic_product("bistable-cubic", rho=0.5, a=0.3),
}


def time_backend(spec, grid, ic, dt, n_steps, backend, repeat):
    best, out = np.inf, None
    for _ in range(repeat):
        t0 = time.perf_counter()
        tr = pde.simulate(spec, grid, ic, dt=dt, t_end=n_steps * dt, backend=backend)
        best = min(best, time.perf_counter() - t0)
        out = tr.snapshots[-1].values
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--cells", type=int, nargs="+", default=[2000, 8000])
    ap.add_argument("--steps", type=int, default=2000)
    ap.add_argument("--dt", type=float, default=0.005)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if "compiled" not in _backend.BACKENDS:
        print("compiled kernel not built; only the python backend is available")
        return 1
    print(f"{'spec':18s} {'cells':>7s} {'compiled s':>11s} {'python s':>10s} {'speedup':>8s} "
          f"{'max diff':>9s}")
    for name, spec in SPECS.items():
        for n in args.cells:
            g = pde.Grid(-100.0, 100.0, n)
            ic = pde.heaviside_ic(g, 0.0, 1.0)
            tc, uc = time_backend(spec, g, ic, args.dt, args.steps, "compiled", args.repeat)
            tp, up = time_backend(spec, g, ic, args.dt, args.steps, "python", args.repeat)
            print(f"{name:18s} {n:7d} {tc:11.4f} {tp:10.4f} {tp / tc:8.1f} "
                  f"{np.max(np.abs(uc - up)):9.1e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
