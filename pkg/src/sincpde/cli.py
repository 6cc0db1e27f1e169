"""Command-line front end.

Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 numerical
non-convergence.  Every command writes CSV tables and one JSON report into
``--out``.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .cache import KernelStore, default_cache_dir
from .experiments import (
    COMPUTE_RADIUS,
    TABLE_ZERO_RADII,
    BracketError,
    RadiusScan,
    compute_mask,
    energy_rate,
    find_zero_radius,
    run_self_convergence,
    run_torsion_study,
    torsion_norm_errors,
    write_convergence_csv,
    write_scan_csv,
    write_solution_csv,
    write_table,
)
from .grid import make_grid
from .kernel import KernelError, estimate_kernel_memory, kernel_cache_key, save_kernel
from .operators import GridField, MaskedOperator
from .quadrature import tensor_gauss
from .solvers import ConvergenceError, eigen_smallest, solve_dirichlet
from .symbols import parse_symbol, rescale_for_domain

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


def _field(name, fn, *args):
    """Run a validator and prefix its error with the offending flag."""
    try:
        return fn(*args)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"--{name}: {exc}") from None


def _parse_domain(text: str) -> float:
    kind, _, rest = text.partition(":")
    if kind != "ball":
        raise ValueError(f"only ball domains are supported, got {text!r}")
    key, eq, val = rest.partition("=")
    if key != "R" or not eq:
        raise ValueError(f"expected ball:R=<radius>, got {text!r}")
    R = float(val)
    if not R > 0:
        raise ValueError("radius must be positive")
    return R


def _parse_pair(text: str, kind=float):
    lo, sep, hi = text.partition(":")
    if not sep:
        raise ValueError(f"expected lo:hi, got {text!r}")
    return kind(lo), kind(hi)


def _positive(x, what="value"):
    if not x > 0:
        raise ValueError(f"{what} must be positive")
    return x


def _quad(q):
    tensor_gauss(q, 1)
    return q


class Run:
    """Shared state of one command: timings, outputs and the report."""

    def __init__(self, args, params):
        self.args = args
        self.params = params
        self.timings = {}
        self.outputs = []
        self.solver = None
        self.extra = {}
        self.out = Path(args.out)

    def timed(self, label):
        run = self

        class _T:
            def __enter__(self):
                self.t0 = time.perf_counter()

            def __exit__(self, *exc):
                run.timings[label] = run.timings.get(label, 0.0) + 1e3 * (time.perf_counter() - self.t0)

        return _T()

    def path(self, name):
        self.out.mkdir(parents=True, exist_ok=True)
        p = self.out / name
        self.outputs.append(str(p))
        return p

    def report(self):
        rep = {
            "command": self.args.command,
            "params": self.params,
            "timings_ms": {k: round(v, 3) for k, v in self.timings.items()},
            "solver": self.solver,
            "outputs": list(self.outputs),
        }
        rep.update(self.extra)
        path = self.path("report.json")
        with open(path, "w") as fh:
            json.dump(rep, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return rep


def _store(args) -> KernelStore:
    return KernelStore(default_cache_dir(args.cache_dir), workers=args.threads)


def _needs_correction(sym, args) -> bool:
    if args.correct is not None:
        return args.correct
    return sym.singular_at_origin


def _dry_run(specs, quad_order):
    total = 0
    for spec in specs:
        need = estimate_kernel_memory(spec, tensor_gauss(quad_order, spec.dim))
        total = max(total, need)
        print(f"d={spec.dim} n={spec.n}: about {need / 2**20:.1f} MiB")
    print(f"peak estimate: {total / 2**20:.1f} MiB")
    return EXIT_OK


# commands ---------------------------------------------------------------------

def cmd_kernel(args) -> int:
    sym = _field("symbol", parse_symbol, args.symbol)
    spec = _field("n", make_grid, args.dim, args.n)
    q = _field("quad", _quad, args.quad)
    corrected = _needs_correction(sym, args)
    if args.dry_run:
        return _dry_run([spec], q)
    params = {"symbol": sym.canonical(), "dim": spec.dim, "n": spec.n, "quad": q, "corrected": corrected}
    run = Run(args, params)
    store = _store(args)
    key = kernel_cache_key(sym, spec, q, corrected)
    with run.timed("kernel"):
        cached = store.lookup(key) is not None
        kern = store.get(sym, spec, q, corrected)
    path = store._path(key)
    if not path.exists():
        save_kernel(kern, path)
    run.outputs.append(str(path))
    run.extra["kernel"] = {"key": key, "checksum": kern.checksum(), "cache_hit": cached}
    print(f"kernel {key}")
    print(f"checksum {kern.checksum()}")
    print(f"{'cache hit' if cached else 'built'} in {run.timings['kernel']:.1f} ms")
    run.report()
    return EXIT_OK


def _read_rhs(path: Path, m: int) -> np.ndarray:
    if path.suffix == ".npy":
        vals = np.load(path)
    else:
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(line for line in fh if not line.startswith("#"))]
        header, body = rows[0], rows[1:]
        col = header.index("value") if "value" in header else len(header) - 1
        vals = np.array([float(r[col]) for r in body])
    vals = np.asarray(vals, dtype=float).ravel()
    if vals.shape != (m,):
        raise ValueError(f"rhs file has {vals.size} values, the domain has {m} lattice points")
    return vals


def cmd_solve(args) -> int:
    sym0 = _field("symbol", parse_symbol, args.symbol)
    spec = _field("n", make_grid, args.dim, args.n)
    q = _field("quad", _quad, args.quad)
    R = _field("domain", _parse_domain, args.domain)
    _field("tol", _positive, args.tol, "tol")
    if args.method not in ("cg", "minres"):
        raise ConfigError("--method: expected cg or minres")
    rhs_path = None
    if args.rhs != "one":
        rhs_path = Path(args.rhs[5:] if args.rhs.startswith("file:") else args.rhs)
        if not rhs_path.is_file():
            raise ConfigError(f"--rhs: file not found: {rhs_path}")
    if args.exact is not None:
        if args.exact != "torsion":
            raise ConfigError("--exact: only 'torsion' is available")
        if sym0.kind != "frac" or sym0.scale != 1.0:
            raise ConfigError("--exact: torsion reference needs an unscaled frac symbol")
    corrected = _needs_correction(sym0, args)
    if args.dry_run:
        return _dry_run([spec], q)
    sym = rescale_for_domain(sym0, COMPUTE_RADIUS, R)
    params = {"symbol": sym0.canonical(), "dim": spec.dim, "n": spec.n, "quad": q, "R": R,
              "rhs": args.rhs, "method": args.method, "tol": args.tol, "max_iter": args.max_iter,
              "corrected": corrected}
    run = Run(args, params)
    mask = compute_mask(spec)
    try:
        b = np.ones(len(mask)) if rhs_path is None else _read_rhs(rhs_path, len(mask))
    except (ValueError, IndexError) as exc:
        raise ConfigError(f"--rhs: {exc}") from None
    store = _store(args)
    with run.timed("kernel"):
        kern = store.get(sym, spec, q, corrected)
    op = MaskedOperator(kern, mask, workers=args.threads)
    with run.timed("solve"):
        u, rep = solve_dirichlet(op, GridField.from_masked(mask, b), method=args.method,
                                 tol=args.tol, max_iter=args.max_iter)
    run.solver = {"iterations": rep.iterations, "residual": rep.final_residual, "converged": rep.converged}
    if args.exact == "torsion":
        with run.timed("errors"):
            l2, en = torsion_norm_errors(u, sym0.param, R, kern, q)
        run.extra["errors"] = {"l2_error": l2, "energy_error": en}
    write_solution_csv(run.path("solution.csv"), u, params, physical_radius=R)
    run.report()
    print(f"{rep.method}: {rep.iterations} iterations, residual {rep.final_residual:.3e}, "
          f"converged={rep.converged}")
    if "errors" in run.extra:
        print("l2_error {l2_error:.6e} energy_error {energy_error:.6e}".format(**run.extra["errors"]))
    return EXIT_OK if rep.converged else EXIT_NUMERIC


def cmd_eigen(args) -> int:
    sym0 = _field("symbol", parse_symbol, args.symbol)
    spec = _field("n", make_grid, args.dim, args.n)
    q = _field("quad", _quad, args.quad)
    if args.radii:
        radii = _field("radii", lambda t: tuple(float(v) for v in t.split(",")), args.radii)
    else:
        radii = (_field("domain", _parse_domain, args.domain),)
    if any(b <= a for a, b in zip(radii, radii[1:])) or radii[0] <= 0:
        raise ConfigError("--radii: radii must be positive and strictly increasing")
    if args.count < 1:
        raise ConfigError("--count: must be >= 1")
    _field("tol", _positive, args.tol, "tol")
    corrected = _needs_correction(sym0, args)
    if args.dry_run:
        return _dry_run([spec], q)
    params = {"symbol": sym0.canonical(), "dim": spec.dim, "n": spec.n, "quad": q, "radii": list(radii),
              "count": args.count, "tol": args.tol, "seed": args.seed, "corrected": corrected}
    run = Run(args, params)
    mask = compute_mask(spec)
    if args.count > len(mask):
        raise ConfigError(f"--count: domain has only {len(mask)} lattice points")
    store = _store(args)
    values, vectors, worst, iters, ok = [], None, 0.0, 0, True
    for R in radii:
        sym = rescale_for_domain(sym0, COMPUTE_RADIUS, R)
        with run.timed("kernel"):
            kern = store.get(sym, spec, q, corrected)
        op = MaskedOperator(kern, mask, workers=args.threads)
        with run.timed("eigen"):
            try:
                res = eigen_smallest(op, args.count, tol=args.tol, max_iter=args.max_iter, seed=args.seed)
            except ConvergenceError as exc:
                res, ok = exc.result, False
        values.append(tuple(float(v) for v in res.eigenvalues))
        vectors = res.eigenvectors
        worst = max(worst, float(np.max(res.residuals)))
        iters += res.iterations
    run.solver = {"iterations": iters, "residual": worst, "converged": ok}
    scan = RadiusScan(radii, tuple(values))
    write_scan_csv(run.path("eigenvalues.csv"), scan, params)
    if args.vectors:
        for i in range(args.count):
            field = GridField.from_masked(mask, vectors[:, i])
            write_solution_csv(run.path(f"eigenvector_{i + 1}.csv"), field, dict(params, index=i + 1),
                               physical_radius=radii[-1])
    run.report()
    for R, lams in zip(radii, values):
        print(f"R={R:g}: " + " ".join(f"{v:.10f}" for v in lams))
    return EXIT_OK if ok else EXIT_NUMERIC


def cmd_zero_radius(args) -> int:
    spec = _field("n", make_grid, args.dim, args.n)
    q = _field("quad", _quad, args.quad)
    lo, hi = _field("bracket", _parse_pair, args.bracket)
    if not 0 < lo < hi:
        raise ConfigError("--bracket: need 0 < lo < hi")
    if args.ell < 1:
        raise ConfigError("--ell: must be >= 1")
    _field("tol", _positive, args.tol, "tol")
    corrected = True if args.correct is None else args.correct
    if args.dry_run:
        return _dry_run([spec], q)
    params = {"symbol": "log", "dim": spec.dim, "n": spec.n, "quad": q, "ell": args.ell,
              "bracket": [lo, hi], "tol": args.tol, "eig_tol": args.eig_tol, "seed": args.seed,
              "corrected": corrected}
    run = Run(args, params)
    trace = []
    store = _store(args)
    with run.timed("bisection"):
        try:
            R = find_zero_radius(args.ell, (lo, hi), spec.n, args.tol, q, dim=spec.dim, corrected=corrected,
                                 tol=args.eig_tol, seed=args.seed, store=store, trace=trace)
        except BracketError as exc:
            f_lo, f_hi = exc.values
            print(f"error: bracket does not straddle zero: lambda_{args.ell}({lo:g}) = {f_lo:.6g}, "
                  f"lambda_{args.ell}({hi:g}) = {f_hi:.6g}", file=sys.stderr)
            return EXIT_CONFIG
    write_table(run.path("bisection.csv"), params, ["R", f"lambda_{args.ell}"], trace)
    run.solver = {"iterations": len(trace), "residual": None, "converged": True}
    ref = TABLE_ZERO_RADII[args.ell - 1] if args.ell <= len(TABLE_ZERO_RADII) else None
    run.extra["zero_radius"] = {"R": R, "reference": ref}
    run.report()
    line = f"R_{args.ell} = {R:.6f}"
    if ref is not None:
        line += f"  (reference {ref:.4f}, difference {R - ref:+.4f})"
    print(line)
    return EXIT_OK


def cmd_convergence(args) -> int:
    lo, hi = _field("levels", _parse_pair, args.levels, int)
    if not 2 <= lo <= hi:
        raise ConfigError("--levels: need 2 <= lo <= hi (exponents of two)")
    levels = [2**e for e in range(lo, hi + 1)]
    for n in levels:
        _field("levels", make_grid, args.dim, n)
    q = _field("quad", _quad, args.quad)
    if args.study == "torsion":
        _field("s", parse_symbol, f"frac:s={args.s}")
        specs = [make_grid(args.dim, n) for n in levels]
        params = {"study": "torsion", "s": args.s, "dim": args.dim, "levels": levels, "quad": q,
                  "corrected": bool(args.correct)}
    else:
        R = _field("R", _positive, args.R, "R")
        n_ref = 2**args.ref_level
        _field("ref-level", make_grid, args.dim, n_ref)
        if n_ref < max(levels):
            raise ConfigError("--ref-level: reference must be at least the finest level")
        specs = [make_grid(args.dim, n_ref)]
        params = {"study": "loglap", "R": R, "dim": args.dim, "levels": levels, "n_ref": n_ref, "quad": q,
                  "corrected": args.correct is not False}
    if args.dry_run:
        return _dry_run(specs, q)
    run = Run(args, params)
    store = _store(args)
    with run.timed("study"):
        if args.study == "torsion":
            records, fit = run_torsion_study(args.dim, args.s, levels, q, corrected=bool(args.correct),
                                             store=store)
            efit = energy_rate(records)
        else:
            records, fit = run_self_convergence(R, levels, n_ref, q, dim=args.dim,
                                                corrected=params["corrected"], store=store)
            efit = None
    write_convergence_csv(run.path("convergence.csv"), records, params, timings=args.timings)
    run.extra["fit"] = {"l2_slope": fit.slope if fit else None,
                        "energy_slope": efit.slope if efit else None}
    run.solver = {"iterations": None, "residual": None, "converged": True}
    run.report()
    for r in records:
        en = "" if r.energy_error is None else f"  energy {r.energy_error:.6e}"
        print(f"n={r.n:5d}  l2 {r.l2_error:.6e}{en}")
    if fit:
        print(f"fitted L2 slope {fit.slope:.4f}")
    if efit:
        print(f"fitted energy slope {efit.slope:.4f}")
    return EXIT_OK


# parser -----------------------------------------------------------------------

def _common(p, symbol_default=None):
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--n", type=int, default=256)
    p.add_argument("--quad", type=int, default=7, help="Gauss order per axis")
    p.add_argument("--correct", dest="correct", action="store_true", default=None,
                   help="apply the corner correction (default: only for log symbols)")
    p.add_argument("--no-correct", dest="correct", action="store_false")
    p.add_argument("--threads", type=int, default=os.cpu_count())
    p.add_argument("--cache-dir", default=None)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out", default="sincpde-out")
    p.add_argument("--dry-run", action="store_true", help="print the memory estimate and exit")
    if symbol_default is not None:
        p.add_argument("--symbol", default=symbol_default)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sincpde", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"sincpde {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("kernel", help="precompute and cache a kernel")
    _common(p, "log")
    p.set_defaults(func=cmd_kernel)

    p = sub.add_parser("solve", help="Dirichlet problem on a ball")
    _common(p, "frac:s=0.5")
    p.add_argument("--domain", default="ball:R=1")
    p.add_argument("--rhs", default="one", help="'one' or a CSV/.npy file with one value per point")
    p.add_argument("--exact", default=None, help="'torsion' reports errors against the exact solution")
    p.add_argument("--method", default="cg")
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--max-iter", type=int, default=5000)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("eigen", help="smallest eigenvalues on balls")
    _common(p, "log")
    p.add_argument("--domain", default="ball:R=2")
    p.add_argument("--radii", default=None, help="comma separated radii, overrides --domain")
    p.add_argument("--count", type=int, default=5)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-iter", type=int, default=500)
    p.add_argument("--vectors", action="store_true", help="also dump eigenvector fields")
    p.set_defaults(func=cmd_eigen)

    p = sub.add_parser("zero-radius", help="radius where an eigenvalue crosses zero")
    _common(p)
    p.add_argument("--ell", type=int, default=1)
    p.add_argument("--bracket", default="1:2")
    p.add_argument("--tol", type=float, default=1e-3, help="width of the final radius bracket")
    p.add_argument("--eig-tol", type=float, default=1e-8)
    p.set_defaults(func=cmd_zero_radius)

    p = sub.add_parser("convergence", help="error tables over dyadic levels")
    _common(p)
    p.add_argument("--study", choices=("torsion", "loglap"), default="torsion")
    p.add_argument("--s", type=float, default=0.5)
    p.add_argument("--R", type=float, default=4.0)
    p.add_argument("--levels", default="5:8", help="exponents lo:hi of the levels n = 2^e")
    p.add_argument("--ref-level", type=int, default=10)
    p.add_argument("--timings", action="store_true", help="add the wall_time column")
    p.set_defaults(func=cmd_convergence)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads is not None and args.threads < 1:
        print("error: --threads: must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except KernelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
