"""Radii at which log-Laplacian Dirichlet eigenvalues on a disc cross zero.

Scans lambda_1..lambda_ell over a few radii, then bisects for the zero radius of
each requested eigenvalue.  The eigenvalues decrease like 2 log(R_ell / R).

    python3 demos/zero_radii.py [--n 128] [--ell 1 2 6]
"""
from __future__ import annotations

import argparse
import math

from sincpde.cache import KernelStore
from sincpde.experiments import TABLE_ZERO_RADII, find_zero_radius, run_radius_scan

BRACKETS = {1: (1.0, 2.0), 2: (2.5, 3.5), 3: (2.5, 3.5), 6: (4.5, 5.0)}


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n", type=int, default=128)
    parser.add_argument("--ell", type=int, nargs="+", default=[1, 2, 6])
    args = parser.parse_args()

    store = KernelStore()
    scan = run_radius_scan(3, [1.0, 2.0, 4.0], args.n, store=store)
    for R, lam in zip(scan.radii, scan.eigenvalues):
        print(f"R={R:g}: " + "  ".join(f"{v:+.5f}" for v in lam))
    shift = scan.column(1)[1] - scan.column(1)[0]
    print(f"lambda_1(2) - lambda_1(1) = {shift:+.5f}  (-2 log 2 = {-2 * math.log(2):+.5f})")

    for ell in args.ell:
        R = find_zero_radius(ell, BRACKETS.get(ell, (1.0, 7.0)), args.n, store=store)
        ref = TABLE_ZERO_RADII[ell - 1]
        print(f"R_{ell} = {R:.4f}  reference {ref:.4f}  difference {R - ref:+.4f}")


if __name__ == "__main__":
    main()
