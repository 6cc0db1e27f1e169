"""Log-Laplacian Dirichlet solution with f = 1 on a disc of radius R.

Prints the solution along a diameter and the self-convergence against a fine
reference lattice.  For R below the first zero radius the operator is positive
definite; above it the problem is indefinite and MINRES is used either way.

    python3 demos/loglap_solution.py [--R 4] [--n 128]
"""
from __future__ import annotations

import argparse

import numpy as np

from sincpde.cache import KernelStore
from sincpde.experiments import COMPUTE_RADIUS, CENTER, run_self_convergence, solve_loglap


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--R", type=float, default=4.0)
    parser.add_argument("--n", type=int, default=128)
    parser.add_argument("--levels", type=int, nargs="+", default=[16, 32, 64])
    args = parser.parse_args()

    store = KernelStore()
    u, report = solve_loglap(args.R, args.n, store=store)
    print(f"{report.method}: {report.iterations} iterations, residual {report.final_residual:.2e}")
    row = int(round(CENTER * args.n))
    line = u.data[:, row]
    xs = (np.arange(args.n) / args.n - CENTER) * args.R / COMPUTE_RADIUS
    for x, v in list(zip(xs, line))[:: max(1, args.n // 32)]:
        if abs(x) <= args.R:
            print(f"  x={x:+7.3f}  u={v:+.6f}")

    records, fit = run_self_convergence(args.R, args.levels, args.n, store=store)
    for r in records:
        print(f"n={r.n:4d}  difference to n={args.n}: {r.l2_error:.4e}")
    if fit is not None:
        print(f"fitted slope {fit.slope:.3f}")


if __name__ == "__main__":
    main()
