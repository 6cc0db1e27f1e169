"""Quadrature rules on the reference cell ``[0, 1]^d``.

Besides plain tensor Gauss-Legendre rules this module provides two rules for
integrands with a singularity at the origin corner of the cell:

* :func:`duffy_rule` splits the cube into ``d`` pyramids (one per coordinate that
  attains the maximum) and pulls each back to the cube, so the Jacobian
  ``t**(d-1)`` multiplies the integrand.  Optionally the radial variable ``t`` is
  integrated on a dyadically graded composite rule, which recovers spectral
  accuracy for ``t log t`` type integrands.
* :func:`graded_rule` covers the cube by dyadic box annuli shrinking towards the
  origin.  It is used for 1D corner cells and as an independent check of the
  Duffy path.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product
from typing import Callable

import numpy as np

__all__ = [
    "QuadratureRule",
    "gauss_legendre_1d",
    "tensorize",
    "tensor_gauss",
    "duffy_rule",
    "duffy_split_integrate",
    "graded_rule",
    "graded_singular_integrate",
    "reflect",
]

MAX_ORDER = 64


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Nodes ``(Q, d)`` and weights ``(Q,)`` on the unit cell; weights sum to one."""

    dim: int
    nodes: np.ndarray
    weights: np.ndarray
    label: str = ""

    def __post_init__(self):
        nodes = np.array(self.nodes, dtype=float).reshape(-1, self.dim)
        weights = np.array(self.weights, dtype=float).reshape(-1)
        if len(nodes) != len(weights):
            raise ValueError("nodes and weights differ in length")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {weights.sum()!r}, expected 1")
        if np.any(nodes <= 0.0) or np.any(nodes >= 1.0):
            raise ValueError("quadrature nodes must lie strictly inside the unit cell")
        nodes.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    def __len__(self) -> int:
        return len(self.weights)

    def integrate(self, f: Callable[[np.ndarray], np.ndarray]) -> float:
        """Apply the rule to ``f``, which maps a ``(Q, d)`` point array to values."""
        return np.dot(self.weights, f(self.nodes))


def _legendre(n: int, x):
    """``P_n(x)`` and ``P_n'(x)`` by the three-term recurrence."""
    p0 = np.ones_like(x)
    p1 = x
    for k in range(2, n + 1):
        p0, p1 = p1, ((2 * k - 1) * x * p1 - (k - 1) * p0) / k
    if n == 0:
        return p0, np.zeros_like(x)
    dp = n * (x * p1 - p0) / (x * x - 1.0)
    return p1, dp


def gauss_legendre_1d(order: int) -> QuadratureRule:
    """Gauss-Legendre rule with ``order`` points mapped to ``[0, 1]``.

    Roots of ``P_order`` are bracketed in the angle variable using the classical
    interlacing bounds ``(k - 1/2) pi / (n + 1/2) < theta_k < k pi / (n + 1/2)``,
    narrowed by bisection and polished with Newton steps.
    """
    if int(order) != order or not 1 <= order <= MAX_ORDER:
        raise ValueError(f"order must be an integer in 1..{MAX_ORDER}, got {order!r}")
    n = int(order)
    half = (n + 1) // 2
    k = np.arange(1, half + 1, dtype=float)
    lo = (k - 0.5) * math.pi / (n + 0.5)
    hi = k * math.pi / (n + 0.5)
    f_lo, _ = _legendre(n, np.cos(lo))
    for _ in range(30):
        mid = 0.5 * (lo + hi)
        f_mid, _ = _legendre(n, np.cos(mid))
        same = np.sign(f_mid) == np.sign(f_lo)
        lo = np.where(same, mid, lo)
        f_lo = np.where(same, f_mid, f_lo)
        hi = np.where(same, hi, mid)
    x = np.cos(0.5 * (lo + hi))
    for _ in range(4):
        p, dp = _legendre(n, x)
        x = x - p / dp
    if n % 2 == 1:
        x[-1] = 0.0
    _, dp = _legendre(n, x)
    w = 2.0 / ((1.0 - x * x) * dp * dp)

    # mirror the positive half so the rule is exactly symmetric about 1/2
    t = 0.5 * x
    nodes = np.concatenate([0.5 - t, (0.5 + t[: n // 2])[::-1]])
    weights = np.concatenate([0.5 * w, (0.5 * w[: n // 2])[::-1]])
    weights = weights / weights.sum()
    return QuadratureRule(1, nodes, weights, label=f"gauss{n}")


def tensorize(rule1d: QuadratureRule, dim: int) -> QuadratureRule:
    """Product rule with ``len(rule1d)**dim`` nodes, first axis varying slowest."""
    if rule1d.dim != 1:
        raise ValueError("tensorize expects a one-dimensional rule")
    x = rule1d.nodes[:, 0]
    grids = np.meshgrid(*([x] * dim), indexing="ij")
    wgrids = np.meshgrid(*([rule1d.weights] * dim), indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=1)
    weights = np.prod(np.stack([g.ravel() for g in wgrids], axis=1), axis=1)
    return QuadratureRule(dim, nodes, weights, label=f"{rule1d.label}^{dim}")


def tensor_gauss(order: int, dim: int) -> QuadratureRule:
    return tensorize(gauss_legendre_1d(order), dim)


def reflect(rule: QuadratureRule, axes) -> QuadratureRule:
    """Rule with ``x_i -> 1 - x_i`` applied on the given axes."""
    nodes = np.array(rule.nodes)
    for a in np.atleast_1d(axes):
        nodes[:, a] = 1.0 - nodes[:, a]
    return QuadratureRule(rule.dim, nodes, rule.weights, label=rule.label + "~")


def _graded_panels(levels: int) -> list[tuple[float, float]]:
    panels = [(2.0 ** -(l + 1), 2.0**-l) for l in range(levels)]
    panels.append((0.0, 2.0**-levels))
    return panels


def duffy_rule(rule: QuadratureRule, radial_levels: int = 0) -> QuadratureRule:
    """Duffy-transformed rule for integrands singular at the origin corner.

    ``rule`` is a ``d``-dimensional rule (``d >= 2``) on the pulled-back cube whose
    first coordinate is the radial variable ``t`` and the rest are the ratios
    ``eta``.  In pyramid ``p`` the point is ``x_p = t`` and ``x_i = t * eta_i``
    otherwise; the Jacobian ``t**(d-1)`` is folded into the weights.  For
    ``d = 2`` this is the two-triangle split with nodes ``(t, eta t)`` and
    ``(eta t, t)``.

    With ``radial_levels > 0`` the ``t`` direction is replaced by a composite rule
    on the panels ``[2^-(l+1), 2^-l]`` plus ``[0, 2^-levels]``.
    """
    d = rule.dim
    if d < 2:
        raise ValueError("the Duffy transform needs dim >= 2; use graded_rule in 1D")
    base_nodes = rule.nodes
    base_w = rule.weights
    if radial_levels > 0:
        chunks_n, chunks_w = [], []
        for a, b in _graded_panels(radial_levels):
            nd = np.array(base_nodes)
            nd[:, 0] = a + (b - a) * nd[:, 0]
            chunks_n.append(nd)
            chunks_w.append(base_w * (b - a))
        base_nodes = np.concatenate(chunks_n)
        base_w = np.concatenate(chunks_w)
    t = base_nodes[:, 0]
    eta = base_nodes[:, 1:]
    jac = base_w * t ** (d - 1)
    nodes, weights = [], []
    for p in range(d):
        pts = np.empty_like(base_nodes)
        pts[:, p] = t
        others = [i for i in range(d) if i != p]
        pts[:, others] = t[:, None] * eta
        nodes.append(pts)
        weights.append(jac)
    nodes = np.concatenate(nodes)
    weights = np.concatenate(weights)
    # the pyramids tile the cube exactly; renormalise away rounding in the weight sum
    weights = weights / math.fsum(weights)
    return QuadratureRule(d, nodes, weights, label=f"duffy({rule.label},{radial_levels})")


def duffy_split_integrate(
    f: Callable[[np.ndarray], np.ndarray], rule: QuadratureRule, radial_levels: int = 0
) -> float:
    """Integrate ``f`` over ``[0,1]^d`` through the Duffy pull-back of ``rule``.

    For ``d = 2`` and ``radial_levels = 0`` this evaluates
    ``sum_i a_i * w_i * (f(w_i, eta_i w_i) + f(eta_i w_i, w_i))``.
    """
    return duffy_rule(rule, radial_levels).integrate(f)


def graded_rule(rule: QuadratureRule, levels: int) -> QuadratureRule:
    """Composite rule on dyadic box annuli around the origin corner.

    Annulus ``l`` is ``[0, 2^-l]^d`` minus ``[0, 2^-(l+1)]^d`` and is covered by
    ``2^d - 1`` boxes of side ``2^-(l+1)``; the last box ``[0, 2^-levels]^d`` gets
    the plain rule.
    """
    if levels < 1:
        raise ValueError("levels must be >= 1")
    d = rule.dim
    offsets = [np.array(o, dtype=float) for o in product((0, 1), repeat=d) if any(o)]
    nodes, weights = [], []
    for l in range(levels):
        side = 2.0 ** -(l + 1)
        for o in offsets:
            nodes.append(side * (o + rule.nodes))
            weights.append(rule.weights * side**d)
    side = 2.0**-levels
    nodes.append(side * rule.nodes)
    weights.append(rule.weights * side**d)
    weights = np.concatenate(weights)
    weights = weights / math.fsum(weights)
    return QuadratureRule(d, np.concatenate(nodes), weights, label=f"graded({rule.label},{levels})")


def graded_singular_integrate(
    f: Callable[[np.ndarray], np.ndarray], levels: int, rule: QuadratureRule
) -> float:
    """Integrate ``f`` over ``[0,1]^d`` with the dyadically graded composite rule."""
    return graded_rule(rule, levels).integrate(f)
