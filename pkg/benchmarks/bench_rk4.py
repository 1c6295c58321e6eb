"""Time the numba and numpy RK4 backends on grids of increasing size.

Usage: python benchmarks/bench_rk4.py [--steps N] [--sizes M ...] [--repeat R]

Each backend integrates the same weakly driven Lorentzian ensemble; the
table lists the best wall time, the throughput in bin-steps per second and
the largest relative difference of the reflected field between backends.
"""

import argparse
import time

import numpy as np

from nvecho import kernels
from nvecho.distributions import bin_to_grid, lorentzian_density
from nvecho.dynamics import integrate, max_stable_dt
from nvecho.model import DriveWaveform, Segment
from nvecho.params import CavityParams, DecoherenceSpec
from nvecho.units import TWO_PI

WS = TWO_PI * 2.88e9


def make_grid(M_delta, M_g=21):
    w = WS + np.linspace(-TWO_PI * 60e6, TWO_PI * 60e6, 8001)
    dens = lorentzian_density(w, WS, TWO_PI * 5e6)
    return bin_to_grid(dens, M_delta, (np.geomspace(1.0, 100.0, M_g), np.ones(M_g)), TWO_PI * 6.25e6,
                       omega_s=WS, span=TWO_PI * 60e6)


def best_time(fn, repeat):
    best = np.inf
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--sizes", type=int, nargs="+", default=[31, 301, 3001])
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args()

    cav = CavityParams.from_Q(WS, 80)
    dec = DecoherenceSpec.from_T2(4.7e-6)
    drive = DriveWaveform((Segment(0.05e-6, 0.5e-6, 1e5, 0.0, TWO_PI * 1e6),))
    backends = ["numpy"] + (["numba"] if kernels.HAVE_NUMBA else [])
    if kernels.HAVE_NUMBA:
        # compile outside the timed region
        g = make_grid(5, 2)
        integrate(drive, g, cav, dec, max_stable_dt(g, cav), 10 * max_stable_dt(g, cav), backend="numba")

    print(f"{'bins':>8} {'backend':>8} {'time_s':>10} {'bin-steps/s':>12} {'max_rel_diff':>13}")
    for M in args.sizes:
        grid = make_grid(M)
        dt = max_stable_dt(grid, cav)
        t_end = args.steps * dt
        ref = None
        for b in backends:
            t, tr = best_time(lambda: integrate(drive, grid, cav, dec, dt, t_end, backend=b), args.repeat)
            diff = 0.0 if ref is None else np.max(np.abs(tr.a_R - ref)) / np.max(np.abs(ref))
            ref = tr.a_R if ref is None else ref
            print(f"{grid.size:>8} {b:>8} {t:>10.4f} {grid.size * args.steps / t:>12.3e} {diff:>13.2e}")


if __name__ == "__main__":
    main()
