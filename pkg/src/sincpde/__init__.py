"""Sinc-basis collocation for nonlocal operators given by Fourier symbols."""
from __future__ import annotations

__version__ = "0.1.0"

from .grid import DomainMask, GridSpec, ball_mask, box_mask, full_mask, linear_index, make_grid
from .kernel import SpectralKernel, apply_duffy_correction, build_kernel, load_kernel, save_kernel
from .operators import GridField, MaskedOperator, apply
from .quadrature import QuadratureRule, duffy_rule, gauss_legendre_1d, tensor_gauss
from .solvers import eigen_smallest, solve_dirichlet
from .symbols import (
    Symbol,
    constant,
    fractional,
    laplacian,
    logarithmic,
    parse_symbol,
    rescale_for_domain,
    shifted_logarithmic,
)

__all__ = [
    "DomainMask",
    "GridSpec",
    "GridField",
    "MaskedOperator",
    "QuadratureRule",
    "SpectralKernel",
    "Symbol",
    "apply",
    "apply_duffy_correction",
    "ball_mask",
    "box_mask",
    "build_kernel",
    "constant",
    "duffy_rule",
    "eigen_smallest",
    "fractional",
    "full_mask",
    "gauss_legendre_1d",
    "laplacian",
    "linear_index",
    "load_kernel",
    "logarithmic",
    "make_grid",
    "parse_symbol",
    "rescale_for_domain",
    "save_kernel",
    "shifted_logarithmic",
    "solve_dirichlet",
    "tensor_gauss",
]
