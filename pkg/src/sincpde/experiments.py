"""Numerical studies: torsion benchmark, eigenvalue scans, zero radii, self-convergence.

All studies embed the physical ball ``B_R`` as the computational ball of radius
``COMPUTE_RADIUS`` centred in the unit box.  The symbol is rescaled by
``r / R`` (see :func:`~sincpde.symbols.rescale_for_domain`) and right-hand sides
are evaluated at the physical point ``R (x - c) / r``.
"""
from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import jv

from .cache import KernelStore
from .grid import DomainMask, GridSpec, ball_mask, full_mask, make_grid
from .kernel import SpectralKernel, build_kernel
from .operators import GridField, MaskedOperator
from .solvers import ConvergenceError, EigenResult, SolveReport, eigen_smallest, solve_dirichlet
from .quadrature import tensor_gauss
from .symbols import fractional, logarithmic, rescale_for_domain

__all__ = [
    "COMPUTE_RADIUS",
    "ErrorRecord",
    "RateFit",
    "RadiusScan",
    "torsion_constant",
    "torsion_exact",
    "torsion_fourier",
    "torsion_norm_errors",
    "l2_error",
    "energy_error",
    "fit_rate",
    "energy_rate",
    "TABLE_ZERO_RADII",
    "compute_mask",
    "to_physical",
    "run_torsion_study",
    "run_radius_scan",
    "eigenvalues_at_radius",
    "find_zero_radius",
    "BracketError",
    "solve_loglap",
    "run_loglap_dirichlet",
    "run_self_convergence",
    "write_convergence_csv",
    "write_scan_csv",
    "write_solution_csv",
    "write_table",
]

COMPUTE_RADIUS = 0.25
CENTER = 0.5

#: zero radii R_l of the log-Laplacian eigenvalues on the disc, rounded to 4 digits
TABLE_ZERO_RADII = (1.6015, 3.0910, 3.0910, 4.4221, 4.4251, 4.7248, 5.6846, 5.6846, 6.2476, 6.2476)


@dataclass(frozen=True)
class ErrorRecord:
    n: int
    h: float
    l2_error: float
    energy_error: Optional[float] = None
    wall_time: float = 0.0

    def __post_init__(self):
        if self.l2_error < 0 or (self.energy_error is not None and self.energy_error < 0):
            raise ValueError("errors must be non-negative")


@dataclass(frozen=True)
class RateFit:
    """Least-squares line through ``(log2 h, log2 error)``; ``slope`` is the order."""

    slope: float
    intercept: float
    points: tuple = ()


@dataclass(frozen=True)
class RadiusScan:
    radii: tuple
    eigenvalues: tuple

    def __post_init__(self):
        r = np.asarray(self.radii, dtype=float)
        if np.any(np.diff(r) <= 0):
            raise ValueError("radii must be strictly increasing")
        if len(self.eigenvalues) != len(r):
            raise ValueError("need one eigenvalue list per radius")

    def column(self, ell: int) -> np.ndarray:
        """``lambda^(ell)`` over the scan (``ell`` is 1-based)."""
        return np.array([lams[ell - 1] for lams in self.eigenvalues])


# exact solutions and error norms ---------------------------------------------

def torsion_constant(d: int, s: float) -> float:
    """``Gamma(d/2) / (4^s Gamma(d/2 + s) Gamma(1 + s))``."""
    if not 0.0 < s < 1.0:
        raise ValueError("s must lie in (0,1)")
    if int(d) != d or d < 1:
        raise ValueError("d must be a positive integer")
    return math.gamma(d / 2) / (4.0**s * math.gamma(d / 2 + s) * math.gamma(1 + s))


def torsion_exact(d: int, s: float, x) -> np.ndarray | float:
    """Solution of ``(-Delta)^s u = 1`` on the unit ball, ``u = 0`` outside.

    ``x`` holds points of shape ``(..., d)``; a single point returns a float.
    """
    c = torsion_constant(d, s)
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != d:
        raise ValueError(f"points must have trailing dimension {d}")
    r2 = np.sum(x * x, axis=-1)
    out = c * np.maximum(0.0, 1.0 - r2) ** s
    return float(out) if out.ndim == 0 else out


def _reference_values(spec: GridSpec, reference) -> np.ndarray:
    if isinstance(reference, GridField):
        if reference.spec != spec:
            raise ValueError("reference field lives on a different grid")
        return reference.data
    pts = spec.points(np.argwhere(np.ones(spec.shape, dtype=bool)))
    return np.asarray(reference(pts), dtype=float).reshape(spec.shape)


def l2_error(u: GridField, reference) -> float:
    """``(h^d sum_k (u[k] - ref(x_k))^2)^(1/2)`` over the whole lattice.

    For sinc expansions this is exactly the L2 distance of the interpolants.
    ``reference`` is a :class:`GridField` or a callable on ``(m, d)`` points.
    """
    diff = u.data - _reference_values(u.spec, reference)
    return float(math.sqrt(u.spec.h**u.spec.dim * float(np.sum(diff * diff))))


def energy_error(u: GridField, ref_coeffs: GridField, frac_kernel: SpectralKernel) -> float:
    """``(h^d <A e, e>)^(1/2)`` with ``e = u - ref`` and the unmasked operator."""
    if not frac_kernel.symbol_id.startswith("frac"):
        raise ValueError(f"energy norm needs a fractional kernel, got {frac_kernel.symbol_id!r}")
    if u.spec != ref_coeffs.spec or u.spec != frac_kernel.spec:
        raise ValueError("fields and kernel must share one grid")
    op = MaskedOperator(frac_kernel, full_mask(u.spec))
    e = (u.data - ref_coeffs.data).ravel()
    form = float(np.dot(op.matvec(e), e))
    return math.sqrt(max(form, 0.0) * u.spec.h**u.spec.dim)


def fit_rate(points: Sequence[tuple[float, float]]) -> RateFit:
    """Least-squares slope of ``log2 error`` against ``log2 h``."""
    pts = [(float(h), float(e)) for h, e in points]
    if len(pts) < 3:
        raise ValueError("need at least 3 points to fit a rate")
    if any(e <= 0 or h <= 0 for h, e in pts):
        raise ValueError("spacings and errors must be positive")
    logs = np.log2(np.array(pts))
    slope, intercept = np.polyfit(logs[:, 0], logs[:, 1], 1)
    return RateFit(float(slope), float(intercept), tuple(map(tuple, logs.tolist())))


# computational embedding ------------------------------------------------------

def compute_mask(spec: GridSpec) -> DomainMask:
    return ball_mask(spec, (CENTER,) * spec.dim, COMPUTE_RADIUS)


def to_physical(points: np.ndarray, R: float) -> np.ndarray:
    """Map lattice points of the computational ball onto ``B_R``."""
    return (np.asarray(points, dtype=float) - CENTER) * (R / COMPUTE_RADIUS)


def _rhs(mask: DomainMask, R: float, f: Optional[Callable]) -> GridField:
    if f is None:
        return GridField.from_masked(mask, np.ones(len(mask)))
    return GridField.from_function(mask, lambda p: f(to_physical(p, R)))


# torsion -----------------------------------------------------------------------

def torsion_fourier(d: int, s: float, xi) -> np.ndarray:
    """Fourier transform ``int exp(-i xi.x) u(x) dx`` of the exact torsion solution.

    ``u = C (1 - |x|^2)_+^s`` has the radial transform
    ``C pi^(d/2) Gamma(s+1) (2/r)^nu J_nu(r)`` with ``nu = d/2 + s``; ``xi`` holds
    radii ``r = |xi|``.
    """
    c = torsion_constant(d, s)
    nu = d / 2 + s
    r = np.asarray(xi, dtype=float)
    head = c * math.pi ** (d / 2) * math.gamma(s + 1)
    small = r < 1e-8
    safe = np.where(small, 1.0, r)
    out = head * (2.0 / safe) ** nu * jv(nu, safe)
    return np.where(small, head / math.gamma(nu + 1), out)


class _RadialMultiplier:
    """Duck-typed symbol so the kernel builder can integrate any radial function."""

    def __init__(self, fn, tag):
        self.fn = fn
        self.tag = tag

    def of_norm2(self, r2):
        return self.fn(np.sqrt(np.asarray(r2, dtype=float)))

    def canonical(self) -> str:
        return self.tag


def torsion_norm_errors(u: GridField, s: float, R: float, frac_kernel: SpectralKernel,
                        quad_order: int = 7) -> tuple[float, float]:
    """``||u - u_h||_L2`` and ``|u - u_h|_H^s`` on the whole space, in physical units.

    ``u_h`` is the sinc expansion with coefficients ``u`` on the computational
    lattice mapped onto ``B_R``.  Expanding the squares leaves three terms: the
    norm of the exact solution (closed form), the norm of ``u_h`` (sinc
    orthogonality, or the stiffness form for ``H^s``), and the cross term
    ``<u, phi_k>``, which is a band-limited Fourier integral of the exact
    transform evaluated with the kernel quadrature.
    """
    spec = u.spec
    d, n = spec.dim, spec.n
    mask = u.mask if u.mask is not None else full_mask(spec)
    stretch = R / COMPUTE_RADIUS
    H = stretch / n
    quad = tensor_gauss(quad_order, d)
    vol = H**d

    def cross(fn, tag):
        kern = build_kernel(_RadialMultiplier(lambda w: fn(w / stretch) / vol, tag), spec, quad)
        stencil = kern.real_stencil()
        centre = np.rint(np.full(d, CENTER * n)).astype(int)
        off = (mask.inside - centre) % (2 * n)
        return stencil[tuple(off.T)]

    # exact solution on B_R is R^(2s) u_1(x / R)
    scale_u = R ** (2 * s)
    uv = mask.gather(u.data)

    def ft(r):
        return scale_u * R**d * torsion_fourier(d, s, r * R)

    c = torsion_constant(d, s)
    norm_l2 = scale_u**2 * R**d * c * c * math.pi ** (d / 2) * math.gamma(2 * s + 1) / math.gamma(d / 2 + 2 * s + 1)
    norm_hs = scale_u * R**d * c * math.pi ** (d / 2) * math.gamma(s + 1) / math.gamma(d / 2 + s + 1)
    l2_sq = norm_l2 - 2 * vol * np.dot(cross(ft, "torsion"), uv) + vol * np.dot(uv, uv)
    op = MaskedOperator(frac_kernel, mask)
    # the rescaled computational stencil equals the physical one
    form = np.dot(op.matvec(uv), uv)
    hs_sq = (norm_hs - 2 * vol * np.dot(cross(lambda r: r ** (2 * s) * ft(r), "torsion-hs"), uv)
             + vol * form)
    return math.sqrt(max(float(l2_sq), 0.0)), math.sqrt(max(float(hs_sq), 0.0))


def run_torsion_study(
    d: int,
    s: float,
    n_levels: Sequence[int],
    quad_order: int = 7,
    *,
    corrected: bool = False,
    norms: str = "exact",
    tol: float = 1e-10,
    max_iter: int = 2000,
    store: Optional[KernelStore] = None,
) -> tuple[list[ErrorRecord], RateFit]:
    """Solve ``(-Delta)^s u = 1`` on ``B_1`` for each ``n`` and compare with the exact solution.

    Parameters
    ----------
    norms : {"exact", "sampled"}
        ``"exact"`` measures ``u - u_h`` in ``L2`` and ``H^s`` of the whole space
        (:func:`torsion_norm_errors`).  ``"sampled"`` compares coefficients with
        point samples of the exact solution through :func:`l2_error` and
        :func:`energy_error`; near the sphere these samples carry lattice
        geometry noise that blurs the rates on coarse grids.

    Returns the per-level records and the L2 rate fit; :func:`energy_rate` fits
    the energy errors of the same records.
    """
    if not 0.0 < s < 1.0:
        raise ValueError("s must lie in (0,1)")
    if norms not in ("exact", "sampled"):
        raise ValueError("norms must be 'exact' or 'sampled'")
    store = store or KernelStore()
    sym = rescale_for_domain(fractional(s), COMPUTE_RADIUS, 1.0)
    records = []
    for n in n_levels:
        t0 = time.perf_counter()
        spec = make_grid(d, n)
        mask = compute_mask(spec)
        kern = store.get(sym, spec, quad_order, corrected)
        op = MaskedOperator(kern, mask)
        u, report = solve_dirichlet(op, _rhs(mask, 1.0, None), method="cg", tol=tol, max_iter=max_iter)
        if not report.converged:
            raise ConvergenceError(f"torsion solve at n={n} did not converge", report)
        if norms == "exact":
            l2, en = torsion_norm_errors(u, s, 1.0, kern, quad_order)
        else:
            exact = GridField.from_function(mask, lambda p: torsion_exact(d, s, to_physical(p, 1.0)))
            l2, en = l2_error(u, exact), energy_error(u, exact, kern)
        records.append(ErrorRecord(n, spec.h, l2, en, time.perf_counter() - t0))
    return records, fit_rate([(r.h, r.l2_error) for r in records])


def energy_rate(records: Sequence[ErrorRecord]) -> RateFit:
    return fit_rate([(r.h, r.energy_error) for r in records])


# log-Laplacian eigenvalues -----------------------------------------------------

class BracketError(ValueError):
    """Bracket endpoints do not have eigenvalues of opposite sign."""

    def __init__(self, message, values=()):
        super().__init__(message)
        self.values = tuple(values)


@dataclass
class _EigenContext:
    n: int
    quad_order: int = 7
    corrected: bool = True
    tol: float = 1e-8
    seed: int = 42
    max_iter: int = 500
    dim: int = 2
    store: KernelStore = field(default_factory=KernelStore)
    warm: Optional[np.ndarray] = None

    def __post_init__(self):
        self.spec = make_grid(self.dim, self.n)
        self.mask = compute_mask(self.spec)

    def solve(self, R: float, count: int) -> EigenResult:
        if not R > 0:
            raise ValueError("radius must be positive")
        sym = rescale_for_domain(logarithmic(), COMPUTE_RADIUS, R)
        op = MaskedOperator(self.store.get(sym, self.spec, self.quad_order, self.corrected), self.mask)
        res = eigen_smallest(op, count, tol=self.tol, max_iter=self.max_iter, seed=self.seed, v0=self.warm)
        self.warm = res.eigenvectors
        return res


def eigenvalues_at_radius(
    R: float, count: int, n: int, quad_order: int = 7, *, dim: int = 2, corrected: bool = True,
    tol: float = 1e-8, seed: int = 42, store: Optional[KernelStore] = None,
) -> EigenResult:
    """Smallest ``count`` eigenpairs of the log-Laplacian Dirichlet problem on ``B_R``."""
    ctx = _EigenContext(n, quad_order, corrected, tol, seed, dim=dim, store=store or KernelStore())
    return ctx.solve(R, count)


def run_radius_scan(
    ell: int, radii: Sequence[float], n: int, quad_order: int = 7, *, dim: int = 2,
    corrected: bool = True, tol: float = 1e-8, seed: int = 42, store: Optional[KernelStore] = None,
) -> RadiusScan:
    """``lambda^(1..ell)(R)`` for every radius (ascending per radius)."""
    radii = tuple(float(r) for r in radii)
    ctx = _EigenContext(n, quad_order, corrected, tol, seed, dim=dim, store=store or KernelStore())
    values = []
    for R in radii:
        values.append(tuple(float(v) for v in ctx.solve(R, ell).eigenvalues))
    return RadiusScan(radii, tuple(values))


def find_zero_radius(
    ell: int, bracket: tuple[float, float], n: int, tol_R: float = 1e-3, quad_order: int = 7, *,
    dim: int = 2, corrected: bool = True, tol: float = 1e-8, seed: int = 42,
    store: Optional[KernelStore] = None, trace: Optional[list] = None,
) -> float:
    """Bisect on ``R`` until ``lambda^(ell)(R)`` changes sign within ``tol_R``.

    The endpoint eigenvalues must have opposite signs; either order is accepted.
    Returns the midpoint of the final bracket.  ``trace`` collects ``(R, lambda)``.
    """
    lo, hi = (float(b) for b in bracket)
    if not 0 < lo < hi:
        raise ValueError("bracket must satisfy 0 < R_lo < R_hi")
    if not tol_R > 0:
        raise ValueError("tol_R must be positive")
    ctx = _EigenContext(n, quad_order, corrected, tol, seed, dim=dim, store=store or KernelStore())

    def lam(R):
        v = float(ctx.solve(R, ell).eigenvalues[ell - 1])
        if trace is not None:
            trace.append((R, v))
        return v

    f_lo, f_hi = lam(lo), lam(hi)
    if f_lo == 0.0:
        return lo
    if f_hi == 0.0:
        return hi
    if (f_lo > 0) == (f_hi > 0):
        raise BracketError(
            f"bracket ({lo}, {hi}) does not straddle zero: lambda_{ell} = {f_lo:.6g}, {f_hi:.6g}",
            (f_lo, f_hi),
        )
    while hi - lo > tol_R:
        mid = 0.5 * (lo + hi)
        f_mid = lam(mid)
        if f_mid == 0.0:
            return mid
        if (f_mid > 0) == (f_lo > 0):
            lo, f_lo = mid, f_mid
        else:
            hi, f_hi = mid, f_mid
    return 0.5 * (lo + hi)


# log-Laplacian Dirichlet problem ----------------------------------------------

def solve_loglap(
    R: float, n: int, f: Optional[Callable] = None, quad_order: int = 7, *, dim: int = 2,
    corrected: bool = True, method: str = "minres", tol: float = 1e-10, max_iter: int = 5000,
    store: Optional[KernelStore] = None,
) -> tuple[GridField, SolveReport]:
    """Log-Laplacian Dirichlet solve on ``B_R``; ``f`` maps physical points to values (default 1)."""
    store = store or KernelStore()
    spec = make_grid(dim, n)
    mask = compute_mask(spec)
    sym = rescale_for_domain(logarithmic(), COMPUTE_RADIUS, R)
    op = MaskedOperator(store.get(sym, spec, quad_order, corrected), mask)
    return solve_dirichlet(op, _rhs(mask, R, f), method=method, tol=tol, max_iter=max_iter)


def run_loglap_dirichlet(R: float, n: int, f: Optional[Callable] = None, **kwargs) -> GridField:
    """As :func:`solve_loglap` but raises :class:`ConvergenceError` instead of returning a report."""
    u, report = solve_loglap(R, n, f, **kwargs)
    if not report.converged:
        raise ConvergenceError(f"log-Laplacian solve at n={n} did not converge", report)
    return u


def run_self_convergence(
    R: float, levels: Sequence[int], n_ref: int, quad_order: int = 7, *,
    f: Optional[Callable] = None, dim: int = 2, corrected: bool = True, tol: float = 1e-10,
    store: Optional[KernelStore] = None,
) -> tuple[list[ErrorRecord], Optional[RateFit]]:
    """Compare coarse solutions with the ``n_ref`` solution at shared lattice points.

    The fit is ``None`` when fewer than three levels have a positive error.
    """
    store = store or KernelStore()
    for n in levels:
        if n > n_ref or n_ref % n:
            raise ValueError(f"level {n} does not nest in the reference lattice {n_ref}")
    t0 = time.perf_counter()
    ref = run_loglap_dirichlet(R, n_ref, f, quad_order=quad_order, dim=dim, corrected=corrected,
                               tol=tol, store=store)
    ref_time = time.perf_counter() - t0
    records = []
    for n in levels:
        t0 = time.perf_counter()
        if n == n_ref:
            u, elapsed = ref, ref_time
        else:
            u = run_loglap_dirichlet(R, n, f, quad_order=quad_order, dim=dim, corrected=corrected,
                                     tol=tol, store=store)
            elapsed = time.perf_counter() - t0
        step = n_ref // n
        sampled = ref.data[(slice(None, None, step),) * dim]
        err = l2_error(u, GridField(u.spec, sampled))
        records.append(ErrorRecord(n, 1.0 / n, err, None, elapsed))
    usable = [(r.h, r.l2_error) for r in records if r.l2_error > 0]
    return records, (fit_rate(usable) if len(usable) >= 3 else None)


# CSV tables ------------------------------------------------------------------

def write_table(path, params: dict, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("# " + json.dumps(params, sort_keys=True) + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_convergence_csv(path, records: Sequence[ErrorRecord], params: dict, timings: bool = True) -> None:
    """Columns ``n, h, l2_error, energy_error[, wall_time]``."""
    header = ["n", "h", "l2_error", "energy_error"] + (["wall_time"] if timings else [])
    rows = []
    for r in records:
        row = [r.n, r.h, r.l2_error, r.energy_error]
        rows.append(row + ([r.wall_time] if timings else []))
    write_table(path, params, header, rows)


def write_scan_csv(path, scan: RadiusScan, params: dict) -> None:
    ell = len(scan.eigenvalues[0]) if scan.eigenvalues else 0
    header = ["R"] + [f"lambda_{i + 1}" for i in range(ell)]
    write_table(path, params, header, ([R, *lams] for R, lams in zip(scan.radii, scan.eigenvalues)))


def write_solution_csv(path, u: GridField, params: dict, physical_radius: Optional[float] = None) -> None:
    """One row per masked lattice point: multi-index, coordinates, value.

    With ``physical_radius`` the coordinates are mapped onto ``B_R``.
    """
    mask = u.mask if u.mask is not None else full_mask(u.spec)
    d = u.spec.dim
    pts = mask.points
    if physical_radius is not None:
        pts = to_physical(pts, physical_radius)
    vals = mask.gather(u.data)
    header = [f"k{i}" for i in range(d)] + [f"x{i}" for i in range(d)] + ["value"]
    rows = ([*map(int, k), *map(float, x), float(v)] for k, x, v in zip(mask.inside, pts, vals))
    write_table(path, params, header, rows)
