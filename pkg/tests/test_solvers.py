from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import dense_matrix
from sincpde.experiments import compute_mask
from sincpde.grid import make_grid
from sincpde.kernel import apply_duffy_correction, build_kernel
from sincpde.operators import GridField, MaskedOperator
from sincpde.quadrature import tensor_gauss
from sincpde.solvers import (
    ConvergenceError,
    IndefiniteOperatorError,
    conjugate_gradient,
    eigen_smallest,
    minres,
    rayleigh_quotient,
    solve_dirichlet,
)
from sincpde.symbols import fractional, logarithmic, rescale_for_domain


class Dense:
    def __init__(self, a):
        self.a = a
        self.shape = a.shape

    def matvec(self, v):
        return self.a @ v


def _log_op(n, R=2.0, order=5):
    spec = make_grid(2, n)
    sym = rescale_for_domain(logarithmic(), 0.25, R)
    q = tensor_gauss(order, 2)
    kern = apply_duffy_correction(build_kernel(sym, spec, q), sym, q)
    return MaskedOperator(kern, compute_mask(spec))


def _frac_op(n, s=0.5):
    spec = make_grid(2, n)
    return MaskedOperator(build_kernel(fractional(s, 0.25), spec, tensor_gauss(5, 2)), compute_mask(spec))


def _spd(m, seed):
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.standard_normal((m, m)))
    return (q * rng.uniform(0.5, 10, m)) @ q.T


@given(st.integers(2, 40), st.integers(0, 10**6))
def test_cg_solves_spd(m, seed):
    a = _spd(m, seed)
    b = np.random.default_rng(seed + 1).standard_normal(m)
    x, it, hist = conjugate_gradient(lambda v: a @ v, b, tol=1e-12, max_iter=10 * m)
    assert np.linalg.norm(a @ x - b) <= 1e-10 * np.linalg.norm(b)
    assert hist[0] == pytest.approx(np.linalg.norm(b))


@given(st.integers(2, 40), st.integers(0, 10**6))
def test_minres_solves_indefinite(m, seed):
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.standard_normal((m, m)))
    lam = rng.uniform(0.5, 5, m) * rng.choice([-1, 1], m)
    a = (q * lam) @ q.T
    b = rng.standard_normal(m)
    x, it, _ = minres(lambda v: a @ v, b, tol=1e-12, max_iter=20 * m)
    assert np.linalg.norm(a @ x - b) <= 1e-9 * np.linalg.norm(b)


def test_cg_detects_indefinite():
    a = np.diag([1.0, -1.0, 2.0])
    with pytest.raises(IndefiniteOperatorError):
        conjugate_gradient(lambda v: a @ v, np.ones(3))


def test_zero_rhs():
    a = np.eye(3)
    x, it, _ = conjugate_gradient(lambda v: a @ v, np.zeros(3))
    assert it == 0 and not x.any()
    x, it, _ = minres(lambda v: a @ v, np.zeros(3))
    assert it == 0 and not x.any()


@pytest.mark.parametrize("method", ["cg", "minres"])
def test_solve_dirichlet_reverified(method):
    op = _frac_op(32)
    f = GridField.from_masked(op.mask, np.ones(op.shape[0]))
    u, rep = solve_dirichlet(op, f, method=method, tol=1e-10)
    assert rep.converged and rep.method == method
    res = np.linalg.norm(op.matvec(u.masked_values()) - 1.0)
    assert res <= 1e-10 * np.sqrt(op.shape[0])
    assert rep.final_residual == pytest.approx(res, rel=1e-6, abs=1e-14)
    assert np.all(u.data[~op.mask.indicator] == 0)


def test_log_operator_is_indefinite_for_large_radius():
    op = _log_op(16, R=6.0)
    f = GridField.from_masked(op.mask, np.ones(op.shape[0]))
    with pytest.raises(IndefiniteOperatorError):
        solve_dirichlet(op, f, method="cg")
    u, rep = solve_dirichlet(op, f, method="minres", tol=1e-10)
    assert rep.converged


def test_nonconvergence_reported():
    op = _frac_op(32)
    f = GridField.from_masked(op.mask, np.ones(op.shape[0]))
    u, rep = solve_dirichlet(op, f, tol=1e-12, max_iter=2)
    assert not rep.converged and rep.iterations == 2
    assert np.isfinite(u.data).all()


def test_solve_dirichlet_validation():
    op = _frac_op(16)
    f = GridField.from_masked(op.mask, np.ones(op.shape[0]))
    with pytest.raises(ValueError):
        solve_dirichlet(op, f, method="gmres")
    with pytest.raises(ValueError):
        solve_dirichlet(op, f, tol=0)
    with pytest.raises(ValueError):
        solve_dirichlet(op, GridField(make_grid(2, 8), np.zeros((8, 8))))


@pytest.mark.parametrize("make", [lambda: _log_op(8), lambda: _frac_op(8), lambda: _log_op(16, R=5.0)])
def test_eigen_matches_dense_oracle(make):
    op = make()
    ref = np.linalg.eigvalsh(dense_matrix(op))
    count = min(6, op.shape[0] - 1)
    res = eigen_smallest(op, count, tol=1e-10)
    np.testing.assert_allclose(res.eigenvalues, ref[:count], atol=1e-8)
    assert np.all(res.residuals <= 1e-10)
    for j in range(count):
        assert rayleigh_quotient(op, res.eigenvectors[:, j]) == pytest.approx(res.eigenvalues[j], abs=1e-9)


def test_eigen_finds_degenerate_pairs():
    op = _log_op(32)
    res = eigen_smallest(op, 3, tol=1e-8)
    assert abs(res.eigenvalues[1] - res.eigenvalues[2]) < 1e-7
    assert res.eigenvalues[0] < res.eigenvalues[1] - 0.5


def test_eigen_warm_start_is_cheaper():
    op = _log_op(32)
    cold = eigen_smallest(op, 3, tol=1e-8)
    warm = eigen_smallest(op, 3, tol=1e-8, v0=cold.eigenvectors)
    np.testing.assert_allclose(warm.eigenvalues, cold.eigenvalues, atol=1e-8)
    assert warm.matvecs <= cold.matvecs


def test_eigen_seeded_reproducible():
    op = _log_op(16)
    a = eigen_smallest(op, 2, seed=7)
    b = eigen_smallest(op, 2, seed=7)
    np.testing.assert_array_equal(a.eigenvalues, b.eigenvalues)


def test_eigen_nonconvergence():
    op = _log_op(32)
    with pytest.raises(ConvergenceError) as info:
        eigen_smallest(op, 4, tol=1e-14, max_iter=2, check_every=1)
    assert info.value.result is not None


def test_eigen_validation():
    op = Dense(np.eye(3))
    with pytest.raises(ValueError):
        eigen_smallest(op, 0)
    with pytest.raises(ValueError):
        eigen_smallest(op, 4)
    with pytest.raises(ValueError):
        rayleigh_quotient(op, np.zeros(3))


def test_eigen_small_dense_exhausts_space():
    a = np.diag([3.0, 1.0, 2.0, 5.0])
    res = eigen_smallest(Dense(a), 3, tol=1e-10)
    np.testing.assert_allclose(res.eigenvalues, [1.0, 2.0, 3.0], atol=1e-12)
