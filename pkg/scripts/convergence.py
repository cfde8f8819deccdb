#!/usr/bin/env python3
"""Grid-convergence study for the shaping round trip and the bookkeeping check.

Prints, for a range of time steps, the shaping L2 round-trip error of a
sin^2 photon and the worst excitation-bookkeeping defect of the emission
run.  The photon edges are kept on grid samples (the span is a multiple of
twelve steps), so the round-trip error falls roughly as dt^2.
"""

import argparse
import math

import numpy as np

from cavity_forge import dressed, dynamics, shaper
from cavity_forge.qcore import TimeGrid, make_params, sin2_photon


def study(g, kappa, gamma, duration_us, resolutions):
    params = make_params(g, kappa, gamma)
    span = 1.2 * duration_us * 1e-6
    print(f"(g, kappa, gamma) = 2pi x ({g}, {kappa}, {gamma}) MHz, photon {duration_us} us")
    print(f"{'dt*g':>8s} {'samples':>8s} {'l2_error':>12s} {'bookkeeping':>12s} {'p_emit':>10s}")
    for res in resolutions:
        # photon on [span/12, 11 span/12]: edges land on samples
        n = 12 * int(math.ceil(span * params.g / res / 12)) + 1
        grid = TimeGrid.spanning(0.0, span, n)
        target = sin2_photon(grid, duration_us * 1e-6, t0=0.1 * duration_us * 1e-6)
        norm = 0.99 * shaper.max_feasible_norm(params, target)
        if gamma > 0:
            norm = min(norm, 0.99 * dressed.emission_limit(params))
        sol = shaper.synthesize_emission_pulse(params, target.scaled(math.sqrt(norm)))
        err, p_emit = shaper.forward_validate(params, sol)
        run = dynamics.integrate_lambda(params, sol.pulse)
        book = np.max(np.abs(dynamics.bookkeeping_defect(params, run.traj)))
        print(f"{grid.dt * params.g:8.4f} {n:8d} {err:12.3e} {book:12.3e} {p_emit:10.6f}")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--g", type=float, default=15.0)
    ap.add_argument("--kappa", type=float, default=2.0)
    ap.add_argument("--gamma", type=float, default=0.0)
    ap.add_argument("--duration-us", type=float, default=0.5)
    ap.add_argument("--resolutions", type=float, nargs="+", default=[0.016, 0.008, 0.004, 0.002])
    args = ap.parse_args(argv)
    study(args.g, args.kappa, args.gamma, args.duration_us, args.resolutions)


if __name__ == "__main__":
    main()
