"""Uniform collocation lattice on the unit box and domain masks.

Grid points are ``x_k = k / N`` for ``k in {0, ..., N-1}^d``. A mask selects the
lattice points lying strictly inside a ball or an axis-aligned box; every other
coefficient is pinned to zero (exterior value condition).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from math import lcm
from typing import Optional, Sequence

import numpy as np

__all__ = [
    "GridSpec",
    "DomainMask",
    "make_grid",
    "ball_mask",
    "box_mask",
    "full_mask",
    "linear_index",
]

MAX_DIM = 4


@dataclass(frozen=True)
class GridSpec:
    dim: int
    n: int

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dim

    @property
    def padded_shape(self) -> tuple[int, ...]:
        return (2 * self.n,) * self.dim

    @property
    def size(self) -> int:
        return self.n**self.dim

    def points(self, index: np.ndarray) -> np.ndarray:
        """Coordinates ``k / N`` of an ``(m, d)`` array of multi-indices."""
        return np.asarray(index, dtype=float) / self.n


def make_grid(dim: int, n: int) -> GridSpec:
    """Lattice with ``n`` points per axis in ``dim`` dimensions.

    ``n`` must be a power of two no smaller than 4.
    """
    if int(dim) != dim or not 1 <= dim <= MAX_DIM:
        raise ValueError(f"dim must be an integer in 1..{MAX_DIM}, got {dim!r}")
    if int(n) != n or n < 4 or (int(n) & (int(n) - 1)) != 0:
        raise ValueError(f"n must be a power of two >= 4, got {n!r}")
    return GridSpec(int(dim), int(n))


@dataclass(frozen=True, eq=False)
class DomainMask:
    """Lattice indices inside an open domain.

    ``inside`` is an ``(m, d)`` integer array in lexicographic order; ``lookup`` maps
    a grid multi-index to its ordinal in ``inside`` (``-1`` when masked out).
    """

    spec: GridSpec
    inside: np.ndarray
    shape_kind: str
    params: dict = field(default_factory=dict)
    lookup: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        inside = np.ascontiguousarray(self.inside, dtype=np.int64).reshape(-1, self.spec.dim)
        lookup = np.full(self.spec.shape, -1, dtype=np.int64)
        lookup[tuple(inside.T)] = np.arange(len(inside))
        inside.setflags(write=False)
        lookup.setflags(write=False)
        object.__setattr__(self, "inside", inside)
        object.__setattr__(self, "lookup", lookup)

    def __len__(self) -> int:
        return len(self.inside)

    @property
    def indicator(self) -> np.ndarray:
        return self.lookup >= 0

    @property
    def points(self) -> np.ndarray:
        return self.spec.points(self.inside)

    def scatter(self, values: np.ndarray) -> np.ndarray:
        """Place a flat vector over ``inside`` onto the full ``N^d`` array."""
        values = np.asarray(values)
        if values.shape != (len(self),):
            raise ValueError(f"expected {len(self)} masked values, got shape {values.shape}")
        out = np.zeros(self.spec.shape, dtype=values.dtype)
        out[tuple(self.inside.T)] = values
        return out

    def gather(self, data: np.ndarray) -> np.ndarray:
        return np.asarray(data)[tuple(self.inside.T)]

    def describe(self) -> str:
        if self.shape_kind == "ball":
            c = ",".join(f"{v:.17g}" for v in self.params["center"])
            return f"ball:center={c};radius={self.params['radius']:.17g}"
        if self.shape_kind == "box":
            lo = ",".join(f"{v:.17g}" for v in self.params["lower"])
            hi = ",".join(f"{v:.17g}" for v in self.params["upper"])
            return f"box:lower={lo};upper={hi}"
        return self.shape_kind


def _as_point(value, dim: int) -> tuple[float, ...]:
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.shape == (1,) and dim > 1:
        arr = np.repeat(arr, dim)
    if arr.shape != (dim,):
        raise ValueError(f"expected a point in {dim} dimensions, got {value!r}")
    return tuple(float(v) for v in arr)


def _scaled_squares(offsets: Sequence[Fraction]) -> tuple[list[int], int]:
    """Integers proportional to ``offsets[i]**2`` with a shared denominator."""
    squares = [f * f for f in offsets]
    denom = lcm(*(q.denominator for q in squares))
    return [int(q * denom) for q in squares], denom


def ball_mask(spec: GridSpec, center, radius: float) -> DomainMask:
    """Mask of lattice points with ``|x_k - center| < radius``.

    The comparison is done in exact rational arithmetic on the binary values of
    ``center`` and ``radius``, so points on the sphere are reliably excluded.
    """
    c = _as_point(center, spec.dim)
    r = float(radius)
    if not r > 0:
        raise ValueError(f"radius must be positive, got {radius!r}")
    rr = Fraction(r)
    for ci in c:
        fc = Fraction(ci)
        if not (fc - rr > 0 and fc + rr < 1):
            raise ValueError(
                f"ball with center {c} and radius {r} is not contained in the open unit box"
            )

    n = spec.n
    axes = []
    denom = 1
    for ci in c:
        nums, d_i = _scaled_squares([Fraction(k) - Fraction(ci) * n for k in range(n)])
        axes.append((nums, d_i))
        denom = lcm(denom, d_i)
    rad_num = int((rr * n) ** 2 * denom)
    scaled = [[v * (denom // d_i) for v in nums] for nums, d_i in axes]

    biggest = max(max(a) for a in scaled) * spec.dim
    dtype = np.int64 if max(biggest, rad_num) < 2**62 else object
    total = np.zeros(spec.shape, dtype=dtype)
    for axis, vals in enumerate(scaled):
        shape = [1] * spec.dim
        shape[axis] = n
        total = total + np.array(vals, dtype=dtype).reshape(shape)
    inside = np.argwhere(np.asarray(total < rad_num, dtype=bool))
    return DomainMask(spec, inside, "ball", {"center": c, "radius": r})


def box_mask(spec: GridSpec, lower, upper) -> DomainMask:
    """Mask of lattice points strictly inside the box ``(lower, upper)``."""
    lo = _as_point(lower, spec.dim)
    hi = _as_point(upper, spec.dim)
    for a, b in zip(lo, hi):
        if not 0 <= a < b <= 1:
            raise ValueError(f"box ({lo}, {hi}) must satisfy 0 <= lower < upper <= 1")
    k = np.arange(spec.n)
    hit = np.ones(spec.shape, dtype=bool)
    for axis, (a, b) in enumerate(zip(lo, hi)):
        ka = np.array([Fraction(a) * spec.n < int(i) < Fraction(b) * spec.n for i in k])
        shape = [1] * spec.dim
        shape[axis] = spec.n
        hit = hit & ka.reshape(shape)
    return DomainMask(spec, np.argwhere(hit), "box", {"lower": lo, "upper": hi})


def full_mask(spec: GridSpec) -> DomainMask:
    """Every lattice point of the box."""
    return DomainMask(spec, np.argwhere(np.ones(spec.shape, dtype=bool)), "full")


def linear_index(mask: DomainMask, k) -> Optional[int]:
    """Ordinal of multi-index ``k`` in ``mask.inside``, or ``None`` if masked out."""
    k = tuple(int(v) for v in np.atleast_1d(k))
    if len(k) != mask.spec.dim or any(not 0 <= v < mask.spec.n for v in k):
        return None
    pos = int(mask.lookup[k])
    return pos if pos >= 0 else None
