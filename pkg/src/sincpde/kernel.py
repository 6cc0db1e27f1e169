"""Discrete Fourier coefficients of the sinc-basis stencil of an operator.

For the basis ``phi_k(x) = prod_i sinc(N x_i - k_i)`` the operator ``L`` with
symbol ``m`` acts on a sinc expansion as a discrete convolution with the stencil
``Phi(n) = (L phi_0)(n / N)``.  With the forward, unnormalised DFT on the
``(2N)^d`` torus,

    Phi_hat[k] = (2N)^-d  int_{[-N,N]^d} m(pi w) Y_d(pi/N (w - k)) dw,

    Y(x) = sum_{j=-N}^{N-1} exp(i j x) = exp(-i x/2) sin(N x) / sin(x/2).

The integral is split into unit cells ``Q_j = j + [0,1]^d``; the same rule on every
cell turns the sum over ``j`` into a circular correlation per quadrature node,
evaluated with FFTs.  Cells touching the origin can afterwards be re-integrated
with a singular rule (:func:`apply_duffy_correction`).
"""
from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass, replace
from itertools import product
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import fft as sfft

from .grid import GridSpec, make_grid
from .quadrature import QuadratureRule, duffy_rule, graded_rule
from .symbols import Symbol

__all__ = [
    "SpectralKernel",
    "KernelError",
    "eval_Y",
    "build_kernel",
    "apply_duffy_correction",
    "cell_contribution",
    "kernel_cache_key",
    "estimate_kernel_memory",
    "save_kernel",
    "load_kernel",
    "DEFAULT_MEMORY_LIMIT",
]

#: |exp(ix) - 1| below this switches Y to its limit value 2N
Y_THRESHOLD = 1e-12
DEFAULT_MEMORY_LIMIT = 4 * 2**30
DEFAULT_RADIAL_LEVELS = 10
DEFAULT_GRADED_LEVELS = 40

SNCK_MAGIC = b"SNCK"
SNCK_VERSION = 1


class KernelError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class SpectralKernel:
    """DFT coefficients ``Phi_hat`` on the ``(2N)^d`` torus in wrap-around order."""

    spec: GridSpec
    values: np.ndarray
    symbol_id: str
    quad_order: int
    corrected: bool = False

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=np.complex128)
        if values.shape != self.spec.padded_shape:
            raise ValueError(f"kernel values must have shape {self.spec.padded_shape}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def stencil(self) -> np.ndarray:
        """Complex real-space stencil ``Phi(n)``, ``n`` in wrap-around order."""
        return sfft.ifftn(self.values)

    def real_stencil(self) -> np.ndarray:
        return self.stencil().real

    def stencil_at(self, offset) -> float:
        """``Phi(n)`` for an integer offset with components in ``[-N, N-1]``."""
        idx = tuple(int(o) % (2 * self.spec.n) for o in np.atleast_1d(offset))
        return float(self.real_stencil()[idx])

    def checksum(self) -> str:
        return hashlib.sha256(self.values.tobytes()).hexdigest()

    def cache_key(self) -> str:
        return f"{self.symbol_id}|d={self.spec.dim}|n={self.spec.n}|q={self.quad_order}|c={int(self.corrected)}"


def eval_Y(n: int, x):
    """``sum_{j=-n}^{n-1} exp(i j x)``, vectorised over ``x``.

    Evaluated as ``exp(-i x/2) sin(n x) / sin(x/2)``, which equals the closed form
    ``exp(-i n x)(exp(2 i n x) - 1) / (exp(i x) - 1)`` but does not cancel near the
    removable singularities; there the value is the limit ``2n``.
    """
    x = np.asarray(x, dtype=float)
    half = np.sin(0.5 * x)
    near = 2.0 * np.abs(half) < Y_THRESHOLD
    safe = np.where(near, 1.0, half)
    out = np.where(near, 2.0 * n + 0j, np.exp(-0.5j * x) * np.sin(n * x) / safe)
    if np.ndim(out) == 0:
        return complex(out)
    return out


def _wrap_indices(n: int) -> np.ndarray:
    """Integers ``-n..n-1`` in DFT wrap-around order (0, 1, ..., n-1, -n, ..., -1)."""
    return np.concatenate([np.arange(0, n), np.arange(-n, 0)])


def estimate_kernel_memory(spec: GridSpec, quad: Optional[QuadratureRule] = None) -> int:
    """Rough peak bytes of :func:`build_kernel` (complex work arrays on the torus)."""
    cells = (2 * spec.n) ** spec.dim
    depth = 1 + math.ceil(math.log2(max(len(quad), 2))) if quad is not None else 7
    return cells * 16 * (depth + 4)


def _node_correlation(sym: Symbol, spec: GridSpec, node: np.ndarray, workers) -> np.ndarray:
    """``sum_j m(pi (j + x)) Y_d(pi/N (j - k + x))`` for all ``k`` at one node ``x``."""
    n, d = spec.n, spec.dim
    j = _wrap_indices(n).astype(float)
    r2 = np.zeros((1,) * d)
    ybar = None
    for axis in range(d):
        shape = [1] * d
        shape[axis] = 2 * n
        r2 = r2 + ((np.pi * (j + node[axis])) ** 2).reshape(shape)
        b = eval_Y(n, np.pi / n * (j + node[axis]))
        # correlation with b equals convolution with b reversed, whose DFT is (2N) ifft(b)
        bt = (2 * n * sfft.ifft(b)).reshape(shape)
        ybar = bt if ybar is None else ybar * bt
    a = sym.of_norm2(r2)
    return sfft.ifftn(sfft.fftn(a, workers=workers) * ybar, workers=workers)


def _pairwise(fn, lo: int, hi: int):
    if hi - lo == 1:
        return fn(lo)
    mid = (lo + hi) // 2
    left = _pairwise(fn, lo, mid)
    left += _pairwise(fn, mid, hi)
    return left


def build_kernel(
    sym: Symbol,
    spec: GridSpec,
    quad: QuadratureRule,
    *,
    workers: Optional[int] = None,
    memory_limit: Optional[int] = DEFAULT_MEMORY_LIMIT,
) -> SpectralKernel:
    """Tensor-rule approximation of ``Phi_hat`` on every cell, no corner correction.

    Parameters
    ----------
    sym : Symbol
        Even multiplier ``m``.
    spec : GridSpec
        Collocation lattice; the kernel lives on the ``(2N)^d`` torus.
    quad : QuadratureRule
        Rule on ``[0,1]^d`` applied identically to every unit cell.
    workers : int, optional
        Thread count handed to ``scipy.fft``.
    memory_limit : int, optional
        Refuse to start if :func:`estimate_kernel_memory` exceeds this many bytes.
    """
    if quad.dim != spec.dim:
        raise ValueError(f"rule dimension {quad.dim} does not match grid dimension {spec.dim}")
    need = estimate_kernel_memory(spec, quad)
    if memory_limit is not None and need > memory_limit:
        raise KernelError(
            f"kernel for d={spec.dim}, n={spec.n} needs about {need / 2**30:.2f} GiB, "
            f"limit is {memory_limit / 2**30:.2f} GiB"
        )

    def term(i):
        return quad.weights[i] * _node_correlation(sym, spec, quad.nodes[i], workers)

    total = _pairwise(term, 0, len(quad))
    total *= (2 * spec.n) ** (-spec.dim)
    order = round(len(quad) ** (1.0 / spec.dim))
    return SpectralKernel(spec, total, sym.canonical(), int(order), False)


def _khatri_rao_sum(coef: np.ndarray, factors: list[np.ndarray], chunk: int = 1 << 22) -> np.ndarray:
    """``sum_q coef[q] * outer(factors[0][q], ..., factors[-1][q])``."""
    m = factors[0].shape[1]
    d = len(factors)
    out = np.zeros((m,) * d, dtype=np.complex128)
    lead = factors[0] * coef[:, None]
    if d == 1:
        return lead.sum(axis=0)
    rest_size = m ** (d - 1)
    step = max(1, chunk // rest_size)
    for start in range(0, len(coef), step):
        sl = slice(start, start + step)
        rest = factors[1][sl]
        for f in factors[2:]:
            rest = (rest[:, :, None] * f[sl][:, None, :]).reshape(rest.shape[0], -1)
        out += (lead[sl].T @ rest).reshape(out.shape)
    return out


def cell_contribution(
    sym: Symbol, spec: GridSpec, cell, nodes: np.ndarray, weights: np.ndarray
) -> np.ndarray:
    """``(2N)^-d sum_q w_q m(pi p_q) Y_d(pi/N (p_q - k))`` for all ``k``.

    ``nodes`` are absolute points ``p_q`` inside the unit cell ``cell + [0,1]^d``.
    """
    n, d = spec.n, spec.dim
    k = _wrap_indices(n).astype(float)
    pts = np.asarray(nodes, dtype=float)
    coef = np.asarray(weights) * sym.of_norm2(np.sum((np.pi * pts) ** 2, axis=1))
    factors = [eval_Y(n, np.pi / n * (pts[:, a, None] - k[None, :])) for a in range(d)]
    return _khatri_rao_sum(coef, factors) * (2 * n) ** (-d)


def _corner_cells(d: int):
    return [np.array(c) for c in product((-1, 0), repeat=d)]


def singular_cell_rule(
    quad: QuadratureRule,
    radial_levels: int = DEFAULT_RADIAL_LEVELS,
    graded_levels: int = DEFAULT_GRADED_LEVELS,
) -> QuadratureRule:
    """Rule on ``[0,1]^d`` for integrands singular at the origin corner."""
    if quad.dim == 1:
        return graded_rule(quad, graded_levels)
    return duffy_rule(quad, radial_levels)


def apply_duffy_correction(
    kernel: SpectralKernel,
    sym: Symbol,
    quad: QuadratureRule,
    *,
    radial_levels: int = DEFAULT_RADIAL_LEVELS,
    graded_levels: int = DEFAULT_GRADED_LEVELS,
) -> SpectralKernel:
    """Replace the tensor-rule contributions of the ``2^d`` cells at the origin.

    Each cell ``Q_j``, ``j in {-1,0}^d``, is reflected onto ``[0,1]^d`` (axes with
    ``j_i = -1`` are negated).  ``m`` is even, so only the ``Y_d`` factor sees the
    reflection.  The singular rule (Duffy pull-back in ``d >= 2``, dyadic grading
    in 1D) carries its Jacobian in the weights, which multiply ``m`` pointwise at
    interior nodes.
    """
    if kernel.corrected:
        raise KernelError("kernel is already corrected")
    if quad.dim != kernel.spec.dim:
        raise ValueError("rule dimension does not match kernel")
    spec = kernel.spec
    sing = singular_cell_rule(quad, radial_levels, graded_levels)
    values = np.array(kernel.values)
    for cell in _corner_cells(spec.dim):
        sign = np.where(cell < 0, -1.0, 1.0)
        values -= cell_contribution(sym, spec, cell, cell + quad.nodes, quad.weights)
        values += cell_contribution(sym, spec, cell, sing.nodes * sign, sing.weights)
    return replace(kernel, values=values, corrected=True)


def kernel_cache_key(sym: Symbol, spec: GridSpec, quad_order: int, corrected: bool) -> str:
    """Canonical cache key, e.g. ``frac:s=0.5|d=2|n=256|q=7|c=0``."""
    return f"{sym.canonical()}|d={spec.dim}|n={spec.n}|q={int(quad_order)}|c={int(bool(corrected))}"


def save_kernel(kernel: SpectralKernel, path) -> None:
    """Write the little-endian ``SNCK`` cache format (version 1)."""
    sid = kernel.symbol_id.encode("utf-8")
    header = SNCK_MAGIC + struct.pack(
        "<HBIHBI", SNCK_VERSION, kernel.spec.dim, kernel.spec.n, kernel.quad_order,
        int(kernel.corrected), len(sid),
    )
    body = np.ascontiguousarray(kernel.values).astype("<c16", copy=False).tobytes()
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(header)
        fh.write(sid)
        fh.write(body)
    tmp.replace(path)


def load_kernel(path) -> SpectralKernel:
    """Read a kernel written by :func:`save_kernel`."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != SNCK_MAGIC:
        raise KernelError(f"{path}: not a SNCK kernel file")
    fixed = struct.calcsize("<HBIHBI")
    version, d, n, q, corrected, slen = struct.unpack("<HBIHBI", blob[4 : 4 + fixed])
    if version != SNCK_VERSION:
        raise KernelError(f"{path}: unsupported SNCK version {version}")
    off = 4 + fixed
    sid = blob[off : off + slen].decode("utf-8")
    off += slen
    spec = make_grid(d, n)
    count = (2 * n) ** d
    if len(blob) - off != 16 * count:
        raise KernelError(f"{path}: truncated kernel payload")
    values = np.frombuffer(blob, dtype="<c16", count=count, offset=off).reshape(spec.padded_shape)
    return SpectralKernel(spec, values.astype(np.complex128), sid, q, bool(corrected))
