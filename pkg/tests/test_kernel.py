from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from oracles import direct_kernel_hat, direct_stencil
from sincpde.cache import KernelStore
from sincpde.grid import make_grid
from sincpde.kernel import (
    KernelError,
    SpectralKernel,
    apply_duffy_correction,
    build_kernel,
    cell_contribution,
    estimate_kernel_memory,
    eval_Y,
    kernel_cache_key,
    load_kernel,
    save_kernel,
)
from sincpde.quadrature import gauss_legendre_1d, tensor_gauss
from sincpde.symbols import constant, fractional, laplacian, logarithmic, shifted_logarithmic


@given(st.sampled_from([2, 4, 8, 16]), st.floats(-20, 20))
def test_eval_Y_matches_sum(n, x):
    direct = np.exp(1j * x * np.arange(-n, n)).sum()
    assert abs(eval_Y(n, x) - direct) < 1e-11 * 2 * n


def test_eval_Y_limit():
    assert eval_Y(8, 0.0) == 16
    assert eval_Y(8, 2 * math.pi) == pytest.approx(16)
    assert abs(eval_Y(8, 1e-13) - 16) < 1e-9


@pytest.mark.parametrize("sym", [fractional(0.3), logarithmic(), laplacian()], ids=str)
@pytest.mark.parametrize("d,n", [(1, 4), (1, 8), (2, 4)])
def test_build_matches_direct_summation(sym, d, n):
    spec = make_grid(d, n)
    quad = tensor_gauss(4, d)
    ref = direct_kernel_hat(sym, spec, quad)
    got = build_kernel(sym, spec, quad).values
    assert np.abs(got - ref).max() <= 1e-12 * np.abs(ref).max()


def test_stencil_matches_real_space_oracle():
    spec, quad = make_grid(2, 4), tensor_gauss(5, 2)
    kern = build_kernel(fractional(0.7), spec, quad)
    offs, vals = direct_stencil(fractional(0.7), spec, quad)
    st_ = kern.stencil()
    got = np.array([st_[tuple(o % 8)] for o in offs])
    np.testing.assert_allclose(got, vals, atol=1e-12 * np.abs(vals).max())


def test_laplacian_stencil_closed_form():
    kern = build_kernel(laplacian(), make_grid(1, 8), gauss_legendre_1d(20))
    assert kern.stencil_at(0) == pytest.approx(64 * math.pi**2 / 3, rel=1e-10)
    for j in range(1, 8):
        assert kern.stencil_at(j) == pytest.approx(128 * (-1) ** j / j**2, rel=1e-10)
        assert kern.stencil_at(-j) == pytest.approx(kern.stencil_at(j), rel=1e-12)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_constant_kernel_is_delta(d):
    kern = build_kernel(constant(2.5), make_grid(d, 4), tensor_gauss(3, d))
    st_ = kern.real_stencil()
    delta = np.zeros_like(st_)
    delta[(0,) * d] = 2.5
    assert np.abs(st_ - delta).max() < 1e-13
    assert np.abs(kern.stencil().imag).max() < 1e-13


def test_log_centre_values_closed_form():
    # Phi(0) = 2 log(pi N) - 2 in 1D and 2 log(pi N) + log 2 - 3 + pi/2 in 2D
    sym = logarithmic()
    k1 = apply_duffy_correction(build_kernel(sym, make_grid(1, 8), gauss_legendre_1d(7)), sym, gauss_legendre_1d(7))
    assert k1.stencil_at(0) == pytest.approx(2 * math.log(8 * math.pi) - 2, abs=1e-10)
    q2 = tensor_gauss(7, 2)
    k2 = apply_duffy_correction(build_kernel(sym, make_grid(2, 8), q2), sym, q2)
    assert k2.stencil_at((0, 0)) == pytest.approx(
        2 * math.log(8 * math.pi) + math.log(2) - 3 + math.pi / 2, abs=1e-8
    )


def test_log_1d_offset_against_adaptive_quadrature():
    n = 8
    sym = logarithmic()
    q = gauss_legendre_1d(7)
    kern = apply_duffy_correction(build_kernel(sym, make_grid(1, n), q), sym, q)
    for j in (1, 3):
        ref, _ = integrate.quad(lambda w: np.log(np.pi**2 * w * w) * np.cos(np.pi * w * j / n), 0, n,
                                points=list(range(1, n)), limit=200, epsabs=1e-13)
        assert kern.stencil_at(j) == pytest.approx(ref / n, abs=1e-9)


def test_frozen_corrected_values():
    q = tensor_gauss(7, 2)
    spec = make_grid(2, 8)
    log_k = apply_duffy_correction(build_kernel(logarithmic(), spec, q), logarithmic(), q)
    frac_k = apply_duffy_correction(build_kernel(fractional(0.5), spec, q), fractional(0.5), q)
    assert log_k.stencil_at((0, 0)) == pytest.approx(5.71228636240652, abs=1e-11)
    assert log_k.stencil_at((1, 0)) == pytest.approx(-0.4545551674982885, abs=1e-11)
    assert log_k.stencil_at((3, -2)) == pytest.approx(-0.024247250319316876, abs=1e-11)
    assert frac_k.stencil_at((0, 0)) == pytest.approx(19.231465931218303, abs=1e-10)
    assert frac_k.stencil_at((0, 0)) == pytest.approx(
        8 * math.pi * (math.sqrt(2) + math.asinh(1)) / 3, rel=1e-6
    )


def test_stencil_is_real_and_even():
    kern = build_kernel(fractional(0.4), make_grid(2, 8), tensor_gauss(5, 2))
    st_ = kern.stencil()
    assert np.abs(st_.imag).max() < 1e-12 * np.abs(st_).max()
    r = st_.real
    assert np.allclose(r, np.roll(np.flip(r, axis=(0, 1)), 1, axis=(0, 1)), atol=1e-12)
    assert np.allclose(r, r.T, atol=1e-12)


def test_duffy_corner_cells_match_graded_oracle():
    from sincpde.kernel import singular_cell_rule
    from sincpde.quadrature import graded_rule

    sym, q = logarithmic(), tensor_gauss(7, 2)
    spec = make_grid(2, 4)
    sing = singular_cell_rule(q)
    oracle = graded_rule(q, 40)
    for cell in ([0, 0], [-1, 0], [-1, -1]):
        sign = np.where(np.array(cell) < 0, -1.0, 1.0)
        a = cell_contribution(sym, spec, cell, sing.nodes * sign, sing.weights)
        b = cell_contribution(sym, spec, cell, oracle.nodes * sign, oracle.weights)
        assert np.abs(a - b).max() < 1e-8


def test_double_correction_rejected():
    q = tensor_gauss(3, 2)
    kern = apply_duffy_correction(build_kernel(logarithmic(), make_grid(2, 4), q), logarithmic(), q)
    assert kern.corrected
    with pytest.raises(KernelError):
        apply_duffy_correction(kern, logarithmic(), q)


def test_memory_limit():
    spec = make_grid(2, 64)
    need = estimate_kernel_memory(spec, tensor_gauss(7, 2))
    assert need > (128**2) * 16
    with pytest.raises(KernelError):
        build_kernel(logarithmic(), spec, tensor_gauss(7, 2), memory_limit=need - 1)


def test_rule_dimension_mismatch():
    with pytest.raises(ValueError):
        build_kernel(logarithmic(), make_grid(2, 4), tensor_gauss(3, 1))


def test_values_shape_checked():
    with pytest.raises(ValueError):
        SpectralKernel(make_grid(1, 4), np.zeros(4), "lap", 3)


def test_cache_key():
    spec = make_grid(2, 256)
    assert kernel_cache_key(fractional(0.5), spec, 7, False) == "frac:s=0.5|d=2|n=256|q=7|c=0"
    kern = build_kernel(constant(1.0), make_grid(1, 4), gauss_legendre_1d(3))
    assert kern.cache_key() == "const:c=1|d=1|n=4|q=3|c=0"


def test_snck_roundtrip(tmp_path):
    q = tensor_gauss(3, 2)
    kern = apply_duffy_correction(build_kernel(logarithmic(0.5), make_grid(2, 8), q), logarithmic(0.5), q)
    path = tmp_path / "k.snck"
    save_kernel(kern, path)
    back = load_kernel(path)
    assert back.checksum() == kern.checksum()
    assert back.cache_key() == kern.cache_key()
    raw = path.read_bytes()
    assert raw[:4] == b"SNCK"
    assert len(raw) == 4 + 14 + len(kern.symbol_id) + 16 * 16 * 16


def test_snck_rejects_garbage(tmp_path):
    bad = tmp_path / "bad.snck"
    bad.write_bytes(b"NOPE" + bytes(40))
    with pytest.raises(KernelError):
        load_kernel(bad)
    q = gauss_legendre_1d(3)
    good = tmp_path / "good.snck"
    save_kernel(build_kernel(laplacian(), make_grid(1, 4), q), good)
    cut = tmp_path / "cut.snck"
    cut.write_bytes(good.read_bytes()[:-8])
    with pytest.raises(KernelError):
        load_kernel(cut)


@pytest.mark.parametrize("sym", [logarithmic(0.0625), shifted_logarithmic(-1.3, 2.0)], ids=str)
def test_store_log_decomposition_matches_direct(sym):
    spec, order = make_grid(2, 16), 5
    store = KernelStore()
    derived = store.get(sym, spec, order, True)
    q = tensor_gauss(order, 2)
    direct = apply_duffy_correction(build_kernel(sym, spec, q), sym, q)
    assert derived.symbol_id == sym.canonical()
    assert np.abs(derived.values - direct.values).max() < 1e-12 * np.abs(direct.values).max()


def test_store_disk_cache(tmp_path):
    spec = make_grid(2, 8)
    first = KernelStore(tmp_path)
    a = first.get(fractional(0.5), spec, 3, False)
    assert first.builds == 1
    second = KernelStore(tmp_path)
    b = second.get(fractional(0.5), spec, 3, False)
    assert second.builds == 0 and second.hits == 1
    assert a.checksum() == b.checksum()
    assert not list(tmp_path.glob("*.lock"))
