"""Fourier multipliers of the supported nonlocal operators.

A :class:`Symbol` is a radial, even, real function ``m(omega)``; ``scale`` is
applied inside the argument, so a symbol with scale ``rho`` evaluates
``m(rho * omega)``.  Radial symbols only depend on ``|omega|^2``, which is what
the kernel builder feeds to :meth:`Symbol.of_norm2`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

__all__ = [
    "Symbol",
    "fractional",
    "logarithmic",
    "shifted_logarithmic",
    "constant",
    "laplacian",
    "parse_symbol",
    "rescale_for_domain",
]

KINDS = ("frac", "log", "slog", "const", "lap")


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


@dataclass(frozen=True)
class Symbol:
    """Multiplier ``m(scale * omega)`` of one of the catalogue kinds.

    ``param`` is the fractional order ``s`` for ``frac``, the additive shift for
    ``slog`` and the value for ``const``; it is unused otherwise.
    """

    kind: str
    param: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown symbol kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "frac" and not 0.0 < self.param < 1.0:
            raise ValueError("s must lie in (0,1)")
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise ValueError("scale must be positive and finite")
        if not math.isfinite(self.param):
            raise ValueError("symbol parameter must be finite")

    @property
    def singular_at_origin(self) -> bool:
        return self.kind in ("log", "slog")

    @property
    def nonsmooth_at_origin(self) -> bool:
        """True when corner cells benefit from the singular rule (log and frac)."""
        return self.kind in ("log", "slog", "frac")

    @property
    def s(self) -> float:
        if self.kind != "frac":
            raise AttributeError("only fractional symbols have an order s")
        return self.param

    def of_norm2(self, r2):
        """``m`` as a function of ``|omega|^2`` (unscaled argument)."""
        r2 = np.asarray(r2, dtype=float) * (self.scale * self.scale)
        if self.kind == "frac":
            return r2**self.param
        if self.kind == "lap":
            return r2
        if self.kind == "const":
            return np.full_like(r2, self.param)
        with np.errstate(divide="ignore"):
            out = np.log(r2)
        if self.kind == "slog":
            out = out + self.param
        return out

    def __call__(self, omega):
        """Evaluate at points ``omega`` of shape ``(..., d)``."""
        omega = np.asarray(omega, dtype=float)
        return self.of_norm2(np.sum(omega * omega, axis=-1))

    def canonical(self) -> str:
        """Textual form, e.g. ``frac:s=0.5`` or ``log:scale=0.0625``."""
        fields = []
        if self.kind == "frac":
            fields.append(f"s={_fmt(self.param)}")
        elif self.kind in ("slog", "const"):
            fields.append(f"c={_fmt(self.param)}")
        if self.scale != 1.0:
            fields.append(f"scale={_fmt(self.scale)}")
        return self.kind + (":" + ",".join(fields) if fields else "")

    def __str__(self) -> str:
        return self.canonical()


def fractional(s: float, scale: float = 1.0) -> Symbol:
    """``|omega|^(2s)``."""
    return Symbol("frac", float(s), float(scale))


def logarithmic(scale: float = 1.0) -> Symbol:
    """``log |omega|^2``."""
    return Symbol("log", 0.0, float(scale))


def shifted_logarithmic(c: float, scale: float = 1.0) -> Symbol:
    """``log |omega|^2 + c``."""
    return Symbol("slog", float(c), float(scale))


def constant(c: float = 1.0, scale: float = 1.0) -> Symbol:
    return Symbol("const", float(c), float(scale))


def laplacian(scale: float = 1.0) -> Symbol:
    """``|omega|^2``, the classical Laplacian."""
    return Symbol("lap", 0.0, float(scale))


_ALIASES = {"frac": "frac", "log": "log", "slog": "slog", "const": "const", "lap": "lap"}


def parse_symbol(text: str) -> Symbol:
    """Inverse of :meth:`Symbol.canonical`.

    Accepted forms: ``frac:s=0.5``, ``log``, ``log:scale=0.0625``, ``slog:c=-2``,
    ``const:c=1``, ``lap``; several ``key=value`` pairs are comma separated.
    """
    head, _, tail = text.strip().partition(":")
    kind = _ALIASES.get(head.strip())
    if kind is None:
        raise ValueError(f"unknown symbol {head!r}; expected one of {sorted(_ALIASES)}")
    values = {}
    if tail:
        for item in tail.split(","):
            key, eq, val = item.partition("=")
            if not eq:
                raise ValueError(f"malformed symbol parameter {item!r}")
            try:
                values[key.strip()] = float(val)
            except ValueError:
                raise ValueError(f"symbol parameter {key.strip()!r} is not a number: {val!r}")
    allowed = {"frac": {"s", "scale"}, "log": {"scale"}, "slog": {"c", "scale"},
               "const": {"c", "scale"}, "lap": {"scale"}}[kind]
    unknown = set(values) - allowed
    if unknown:
        raise ValueError(f"unexpected parameters {sorted(unknown)} for symbol {kind!r}")
    scale = values.get("scale", 1.0)
    if kind == "frac":
        if "s" not in values:
            raise ValueError("fractional symbol needs s, e.g. frac:s=0.5")
        return Symbol("frac", values["s"], scale)
    if kind == "const":
        return Symbol("const", values.get("c", 1.0), scale)
    if kind == "slog":
        return Symbol("slog", values.get("c", 0.0), scale)
    return Symbol(kind, 0.0, scale)


def rescale_for_domain(sym: Symbol, r: float, R: float) -> Symbol:
    """Symbol whose Dirichlet problem on ``B_r`` mirrors ``sym`` on ``B_R``.

    If ``u`` solves the problem with symbol ``m(r/R omega)`` on ``B_r`` then
    ``v(x) = u(r x / R)`` solves the problem with symbol ``m`` on ``B_R``; for a
    right-hand side ``f`` on ``B_r`` the transformed data is ``f(r x / R)``.
    """
    if not (r > 0 and R > 0):
        raise ValueError("radii must be positive")
    return replace(sym, scale=sym.scale * (r / R))
