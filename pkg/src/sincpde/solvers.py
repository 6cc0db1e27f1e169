"""Krylov solvers for the symmetric collocation system.

Everything here only needs ``op.matvec`` (accepting ``(m,)`` and ``(m, b)`` arrays)
and ``op.shape``; :class:`~sincpde.operators.MaskedOperator` provides both.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .operators import GridField, MaskedOperator

__all__ = [
    "SolveReport",
    "EigenResult",
    "ConvergenceError",
    "IndefiniteOperatorError",
    "conjugate_gradient",
    "minres",
    "solve_dirichlet",
    "eigen_smallest",
    "rayleigh_quotient",
]


class ConvergenceError(RuntimeError):
    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class IndefiniteOperatorError(ArithmeticError):
    """CG met a direction of non-positive curvature; retry with MINRES."""


@dataclass
class SolveReport:
    iterations: int
    final_residual: float
    converged: bool
    method: str
    rhs_norm: float = 0.0
    history: list = field(default_factory=list, repr=False)


@dataclass
class EigenResult:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    residuals: np.ndarray
    iterations: int = 0
    matvecs: int = 0
    shift: float = 0.0


def _norm(v) -> float:
    return float(np.sqrt(np.dot(v, v)))


def conjugate_gradient(matvec, b, tol=1e-10, max_iter=1000, x0=None):
    """Plain CG for symmetric positive definite systems.

    Returns ``(x, iterations, history)``; stops when the recursively updated
    residual drops below ``tol * |b|``.
    """
    b = np.asarray(b, dtype=float)
    bnorm = _norm(b)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    r = b - matvec(x) if x0 is not None else b.copy()
    rr = float(np.dot(r, r))
    history = [math.sqrt(rr)]
    if bnorm == 0.0:
        return np.zeros_like(b), 0, history
    p = r.copy()
    it = 0
    while it < max_iter and math.sqrt(rr) > tol * bnorm:
        ap = matvec(p)
        curv = float(np.dot(p, ap))
        if curv <= 0.0:
            raise IndefiniteOperatorError(
                f"non-positive curvature {curv:.3e} at CG iteration {it + 1}; use MINRES"
            )
        alpha = rr / curv
        x += alpha * p
        r -= alpha * ap
        rr_new = float(np.dot(r, r))
        p *= rr_new / rr
        p += r
        rr = rr_new
        it += 1
        history.append(math.sqrt(rr))
    return x, it, history


def minres(matvec, b, tol=1e-10, max_iter=1000, x0=None):
    """MINRES for symmetric (possibly indefinite) systems, Paige-Saunders form.

    Returns ``(x, iterations, history)``; ``history`` holds the recurrence
    residual estimates ``phibar``.
    """
    b = np.asarray(b, dtype=float)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    r1 = b - matvec(x) if x0 is not None else b.copy()
    beta1 = _norm(r1)
    bnorm = _norm(b)
    history = [beta1]
    if beta1 == 0.0:
        return x, 0, history
    eps = np.finfo(float).eps
    r2 = r1.copy()
    oldb, beta = 0.0, beta1
    dbar = epsln = 0.0
    phibar = beta1
    cs, sn = -1.0, 0.0
    w = np.zeros_like(b)
    w2 = np.zeros_like(b)
    it = 0
    while it < max_iter:
        it += 1
        v = r2 / beta
        y = matvec(v)
        if it >= 2:
            y -= (beta / oldb) * r1
        alfa = float(np.dot(v, y))
        y -= (alfa / beta) * r2
        r1, r2 = r2, y
        oldb, beta = beta, _norm(r2)
        oldeps = epsln
        delta = cs * dbar + sn * alfa
        gbar = sn * dbar - cs * alfa
        epsln = sn * beta
        dbar = -cs * beta
        gamma = max(math.hypot(gbar, beta), eps)
        cs, sn = gbar / gamma, beta / gamma
        phi = cs * phibar
        phibar = sn * phibar
        w1, w2 = w2, w
        w = (v - oldeps * w1 - delta * w2) / gamma
        x += phi * w
        history.append(phibar)
        if phibar <= tol * bnorm or beta <= eps * beta1:
            break
    return x, it, history


def _solve(matvec, b, method, tol, max_iter, x0=None, restarts=3):
    """Run ``method`` and re-verify the residual with one extra application.

    If rounding lets the true residual lag the recurrence, the solve is
    restarted from the current iterate (at most ``restarts`` times).
    """
    run = {"cg": conjugate_gradient, "minres": minres}[method]
    bnorm = _norm(b)
    x = None if x0 is None else np.array(x0, dtype=float)
    used = 0
    history = []
    for _ in range(restarts + 1):
        x, it, hist = run(matvec, b, tol=tol, max_iter=max_iter - used, x0=x)
        used += it
        history.extend(hist)
        res = _norm(b - matvec(x))
        if res <= tol * bnorm or used >= max_iter:
            break
    return x, SolveReport(used, res, bool(res <= tol * bnorm), method, bnorm, history)


def solve_dirichlet(
    op: MaskedOperator,
    f: GridField,
    method: str = "cg",
    tol: float = 1e-10,
    max_iter: int = 1000,
    x0=None,
) -> tuple[GridField, SolveReport]:
    """Collocation solve ``(L u_h)(x_k) = f(x_k)`` on the mask, ``u_h = 0`` outside.

    On non-convergence the best iterate is returned with ``report.converged``
    false.  CG raises :class:`IndefiniteOperatorError` on indefinite systems.
    """
    if method not in ("cg", "minres"):
        raise ValueError(f"unknown method {method!r}; expected 'cg' or 'minres'")
    if not tol > 0:
        raise ValueError("tol must be positive")
    if f.spec != op.spec:
        raise ValueError("right-hand side lives on a different grid")
    b = op.mask.gather(f.data)
    if not np.all(np.isfinite(b)):
        raise ValueError("right-hand side must be finite on the mask")
    x, report = _solve(op.matvec, b, method, tol, max_iter, x0=x0)
    return GridField.from_masked(op.mask, x), report


def rayleigh_quotient(op, v) -> float:
    """``<Av, v> / <v, v>``."""
    v = np.asarray(v, dtype=float)
    vv = float(np.dot(v, v))
    if vv == 0.0:
        raise ValueError("Rayleigh quotient of the zero vector")
    return float(np.dot(op.matvec(v), v)) / vv


def _spectral_bound(matvec, m, rng, iterations=30) -> float:
    """Upper bound for ``|lambda|max`` from power iterations, padded by 5 %."""
    v = rng.standard_normal(m)
    v /= _norm(v)
    est = 0.0
    for _ in range(iterations):
        w = matvec(v)
        est = _norm(w)
        if est == 0.0:
            return 1.0
        v = w / est
    return 1.05 * est + 1e-12


def _orthonormalize(block, basis, rng):
    """Orthonormal columns spanning ``block`` minus ``basis``, refilling lost rank."""
    for _ in range(2):
        if basis is not None and basis.shape[0]:
            block -= basis.T @ (basis @ block)
    q, r = np.linalg.qr(block)
    scale = max(np.abs(np.diag(r)).max(initial=0.0), 1.0)
    weak = np.abs(np.diag(r)) < 1e-10 * scale
    if np.any(weak):
        r[weak, :] = 0.0
        for i in np.flatnonzero(weak):
            fresh = rng.standard_normal(block.shape[0])
            for _ in range(2):
                if basis is not None and basis.shape[0]:
                    fresh -= basis.T @ (basis @ fresh)
                others = np.delete(q, i, axis=1)
                fresh -= others @ (others.T @ fresh)
            q[:, i] = fresh / _norm(fresh)
    return q, r


def eigen_smallest(
    op,
    count: int,
    tol: float = 1e-8,
    max_iter: int = 500,
    seed: int = 42,
    block_size: Optional[int] = None,
    v0: Optional[np.ndarray] = None,
    check_every: int = 4,
) -> EigenResult:
    """The ``count`` algebraically smallest eigenpairs of a symmetric operator.

    Block Lanczos with full reorthogonalisation runs on the flipped operator
    ``sigma I - A``, where ``sigma`` bounds the spectrum from above (30 power
    iterations), so the wanted eigenvalues become the largest ones.  Convergence
    needs residuals ``|A v - lambda v| <= tol`` for the wanted pairs, checked once
    more with the original operator, and the next Ritz value must be converged or
    separated from the last wanted one so a hidden degenerate partner is not
    missed.

    Parameters
    ----------
    op : MaskedOperator or object with ``matvec`` and ``shape``
    count : int
        Number of eigenpairs.
    tol : float
        Absolute residual tolerance for unit eigenvectors.
    max_iter : int
        Maximum number of block iterations.
    seed : int
        Seed of the random starting block.
    block_size : int, optional
        Defaults to ``min(count, 2)``; it must be at least the multiplicity of the
        degenerate eigenvalues that should be resolved.
    v0 : array, optional
        ``(m, j)`` warm-start vectors, e.g. eigenvectors of a nearby problem.
    """
    matvec = op.matvec
    m = op.shape[0]
    if count < 1:
        raise ValueError("count must be >= 1")
    if count > m:
        raise ValueError(f"count {count} exceeds the subspace dimension {m}")
    rng = np.random.default_rng(seed)
    b = min(block_size or min(count, 2), m)
    if v0 is not None:
        v0 = np.asarray(v0, dtype=float).reshape(m, -1)
        b = min(max(b, v0.shape[1]), m)

    sigma = _spectral_bound(matvec, m, rng)

    def flipped(x):
        return sigma * x - matvec(x)

    start = rng.standard_normal((m, b))
    if v0 is not None:
        start[:, : v0.shape[1]] = v0 + 1e-3 * start[:, : v0.shape[1]] * np.abs(v0).max()
    cur, _ = _orthonormalize(start, None, rng)
    capacity = min(m, b * (max_iter + 1))
    if capacity < m:
        capacity = min(m, capacity + b)
    basis = np.empty((capacity, m))
    basis[:b] = cur.T
    k = b
    tmat = np.zeros((capacity, capacity))
    matvecs = 30
    it = 0
    while True:
        it += 1
        bc = cur.shape[1]
        w = flipped(cur)
        matvecs += bc
        aj = cur.T @ w
        tmat[k - bc : k, k - bc : k] = 0.5 * (aj + aj.T)
        exhausted = k >= m
        if not exhausted:
            nxt, rj = _orthonormalize(w, basis[:k], rng)
            nb = min(b, m - k)
            nxt, rj = nxt[:, :nb], rj[:nb]
        if exhausted or it % check_every == 0 or it >= max_iter:
            theta, s = np.linalg.eigh(tmat[:k, :k])
            want = np.argsort(theta)[::-1][: min(count + 1, k)]
            if exhausted:
                res = np.zeros(len(want))
            else:
                res = np.linalg.norm(rj @ s[k - bc : k][:, want], axis=0)
            lam = sigma - theta[want]
            ok = bool(np.all(res[:count] <= 0.5 * tol))
            if ok and len(want) > count:
                separated = lam[count] - res[count] > lam[count - 1] + res[count - 1]
                ok = bool(res[count] <= tol or separated)
            if ok or exhausted or it >= max_iter:
                vecs = basis[:k].T @ s[:, want[:count]]
                vecs /= np.linalg.norm(vecs, axis=0)
                lam_c = np.einsum("ij,ij->j", matvec(vecs), vecs)
                true_res = np.linalg.norm(matvec(vecs) - vecs * lam_c, axis=0)
                matvecs += 2 * count
                idx = np.argsort(lam_c)
                result = EigenResult(lam_c[idx], vecs[:, idx], true_res[idx], it, matvecs, sigma)
                if np.all(true_res <= tol):
                    return result
                if exhausted or it >= max_iter:
                    raise ConvergenceError(
                        f"Lanczos did not reach tol={tol:g} in {it} block iterations "
                        f"(max residual {true_res.max():.3e})",
                        result,
                    )
        tmat[k : k + nb, k - bc : k] = rj
        tmat[k - bc : k, k : k + nb] = rj.T
        basis[k : k + nb] = nxt.T
        k += nb
        cur = nxt
