"""Compare the compiled and numpy inflow-angle solvers.

    python3 benchmarks/bench_bem.py [--points 2000] [--repeat 5]

Times the raw root solve on a (lambda, section) grid and a full rotor
Cp(lambda) sweep through the public API, and reports how far the two
backends' inflow angles differ.
"""

import argparse
import timeit

import numpy as np

from hkt_ccd.bem import _backend, cp_of_lambda
from hkt_ccd.bem.solver import _section_arrays
from hkt_ccd.rotor_model import build_scaled_baseline


def solver_args(spec, points):
    sa = _section_arrays(spec, spec.geometry.sections)
    lam = np.linspace(0.5, 14.0, points)
    r = sa["r"][None, :]
    x = lam[:, None] * r / spec.tip_radius
    sigma = spec.num_blades * sa["chord"][None, :] / (2 * np.pi * r)
    return (x, sigma, np.radians(sa["twist"])[None, :], sa["ftip"][None, :], sa["fhub"][None, :],
            sa["offset"][None, :], sa["stack"])


def best_of(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--points", type=int, default=2000, help="tip-speed ratios in the grid")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    spec = build_scaled_baseline()
    sargs = solver_args(spec, args.points)
    lambdas = np.linspace(2.0, 12.0, 201)
    nsolve = sargs[0].size

    print(f"{'backend':<8s} {'root solves/s':>14s} {'Cp sweep (ms)':>14s}")
    phis, times = {}, {}
    saved = _backend.solve_phi
    try:
        for name, solve in sorted(_backend.SOLVERS.items()):
            _backend.solve_phi = solve
            phis[name] = solve(*sargs)[0]
            t_raw = best_of(lambda: solve(*sargs), args.repeat)
            t_cp = best_of(lambda: cp_of_lambda(spec, lambdas), args.repeat)
            times[name] = (t_raw, t_cp)
            print(f"{name:<8s} {nsolve / t_raw:14.3e} {1e3 * t_cp:14.2f}")
    finally:
        _backend.solve_phi = saved

    if len(times) == 2:
        (tc, cc), (tn, cn) = times["cython"], times["numpy"]
        print(f"speed-up: root solve x{tn / tc:.1f}, Cp sweep x{cn / cc:.1f}")
        ok = np.isfinite(phis["cython"]) & np.isfinite(phis["numpy"])
        print(f"max |phi difference|: {np.max(np.abs(phis['cython'][ok] - phis['numpy'][ok])):.2e} rad")
    else:
        print("compiled kernel not built; only the numpy backend was timed")


if __name__ == "__main__":
    main()
