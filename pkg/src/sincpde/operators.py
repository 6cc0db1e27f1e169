"""Matrix-free application of the collocation matrix ``A[i, j] = Phi(k_i - k_j)``."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import fft as sfft

from .grid import DomainMask, GridSpec
from .kernel import SpectralKernel

__all__ = ["GridField", "MaskedOperator", "OperatorError", "apply", "apply_masked_vector"]

IMAG_TOL = 1e-9
KERNEL_SYMMETRY_TOL = 1e-10


class OperatorError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class GridField:
    """Real coefficients over the ``N^d`` lattice, zero outside ``mask`` if one is set."""

    spec: GridSpec
    data: np.ndarray
    mask: Optional[DomainMask] = None

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.shape != self.spec.shape:
            raise ValueError(f"field data must have shape {self.spec.shape}, got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("field data must be finite")
        if self.mask is not None:
            if self.mask.spec != self.spec:
                raise ValueError("mask lives on a different grid")
            if np.any(data[~self.mask.indicator] != 0):
                raise ValueError("field is nonzero outside its mask")
        object.__setattr__(self, "data", data)

    @classmethod
    def from_masked(cls, mask: DomainMask, values) -> "GridField":
        return cls(mask.spec, mask.scatter(np.asarray(values, dtype=float)), mask)

    @classmethod
    def from_function(cls, mask: DomainMask, f) -> "GridField":
        """Sample ``f`` (mapping ``(m, d)`` points to values) at the masked lattice points."""
        vals = np.broadcast_to(np.asarray(f(mask.points), dtype=float), (len(mask),))
        return cls.from_masked(mask, vals)

    def masked_values(self) -> np.ndarray:
        if self.mask is None:
            raise ValueError("field has no mask")
        return self.mask.gather(self.data)


class MaskedOperator:
    """Collocation operator restricted to the lattice points of a mask.

    The stencil is applied by zero padding to the ``(2N)^d`` torus, multiplying by
    the kernel's DFT coefficients and truncating back.  Offsets between lattice
    points stay within ``[-(N-1), N-1]`` so the torus never aliases.
    """

    def __init__(self, kernel: SpectralKernel, mask: DomainMask, workers: Optional[int] = None):
        if kernel.spec != mask.spec:
            raise OperatorError(f"kernel grid {kernel.spec} does not match mask grid {mask.spec}")
        self.kernel = kernel
        self.mask = mask
        self.workers = workers
        stencil = kernel.stencil()
        scale = np.abs(stencil).max()
        if np.abs(stencil.imag).max() > KERNEL_SYMMETRY_TOL * scale:
            raise OperatorError("kernel stencil is not real; kernel values are corrupted")
        n = kernel.spec.n
        self._half = np.ascontiguousarray(kernel.values[..., : n + 1])
        self._index = tuple(mask.inside.T)

    @property
    def spec(self) -> GridSpec:
        return self.mask.spec

    @property
    def shape(self) -> tuple[int, int]:
        return (len(self.mask), len(self.mask))

    def _convolve_real(self, grid: np.ndarray) -> np.ndarray:
        """Stencil convolution of real arrays ``(..., N, ..., N)``; batch axes lead."""
        d = self.spec.dim
        axes = tuple(range(grid.ndim - d, grid.ndim))
        padded = self.spec.padded_shape
        spectrum = sfft.rfftn(grid, s=padded, axes=axes, workers=self.workers)
        spectrum *= self._half
        out = sfft.irfftn(spectrum, s=padded, axes=axes, workers=self.workers)
        n = self.spec.n
        return out[(Ellipsis,) + (slice(0, n),) * d]

    def matvec(self, v: np.ndarray) -> np.ndarray:
        """``A v`` for masked vectors ``v`` of shape ``(m,)`` or ``(m, b)``."""
        v = np.asarray(v, dtype=float)
        m = len(self.mask)
        if v.shape[0] != m or v.ndim > 2:
            raise ValueError(f"expected {m} masked values, got shape {v.shape}")
        if v.ndim == 1:
            grid = np.zeros(self.spec.shape)
            grid[self._index] = v
            return self._convolve_real(grid)[self._index]
        grid = np.zeros((v.shape[1],) + self.spec.shape)
        grid[(slice(None),) + self._index] = v.T
        out = self._convolve_real(grid)
        return out[(slice(None),) + self._index].T

    __call__ = matvec

    def diagonal_value(self) -> float:
        return float(self.kernel.real_stencil()[(0,) * self.spec.dim])


def apply(op: MaskedOperator, u: GridField) -> GridField:
    """``w[kappa] = sum_k u[k] Phi(kappa - k)`` on the mask, zero elsewhere.

    Uses the full complex DFT and checks that the imaginary residue stays below
    ``1e-9 * max|w|``; a larger residue means the kernel is not a real stencil.
    """
    if u.spec != op.spec:
        raise OperatorError("field and operator live on different grids")
    data = np.where(op.mask.indicator, u.data, 0.0)
    if np.any(data != u.data):
        raise OperatorError("field is nonzero outside the operator's mask")
    spec = op.spec
    padded = np.zeros(spec.padded_shape)
    padded[(slice(0, spec.n),) * spec.dim] = data
    full = sfft.ifftn(sfft.fftn(padded, workers=op.workers) * op.kernel.values, workers=op.workers)
    full = full[(slice(0, spec.n),) * spec.dim]
    peak = np.abs(full.real).max() if full.size else 0.0
    if np.abs(full.imag).max() > IMAG_TOL * max(peak, np.finfo(float).tiny):
        raise OperatorError("imaginary residue after convolution exceeds tolerance")
    out = np.where(op.mask.indicator, full.real, 0.0)
    return GridField(spec, out, op.mask)


def apply_masked_vector(op: MaskedOperator, v) -> np.ndarray:
    """Solver-facing view of :func:`apply` on the flat ordered vector over ``inside``."""
    v = np.asarray(v, dtype=float)
    if v.shape != (len(op.mask),):
        raise ValueError(f"expected {len(op.mask)} masked values, got shape {v.shape}")
    return op.matvec(v)
