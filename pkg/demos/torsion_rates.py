"""Convergence of the fractional torsion problem on the unit disc.

Solves (-Delta)^s u = 1 on B_1 with u = 0 outside for a few values of s and
prints the whole-space L2 and H^s errors per level with the fitted slopes.

    python3 demos/torsion_rates.py [--levels 16 32 64 128]
"""
from __future__ import annotations

import argparse

from sincpde.cache import KernelStore
from sincpde.experiments import energy_rate, run_torsion_study


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--levels", type=int, nargs="+", default=[16, 32, 64, 128])
    parser.add_argument("--s", type=float, nargs="+", default=[0.25, 0.5, 0.75])
    parser.add_argument("--quad", type=int, default=7)
    args = parser.parse_args()

    store = KernelStore()
    for s in args.s:
        records, fit = run_torsion_study(2, s, args.levels, args.quad, store=store)
        print(f"s = {s}")
        for r in records:
            print(f"  n={r.n:5d}  L2 {r.l2_error:.4e}  H^s {r.energy_error:.4e}  ({r.wall_time:.1f} s)")
        print(f"  slopes: L2 {fit.slope:.3f} (expected {min(0.5 + s, 1.0)}), "
              f"H^s {energy_rate(records).slope:.3f} (expected 0.5)")


if __name__ == "__main__":
    main()
