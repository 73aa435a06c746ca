import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ucplab.errors import InvalidParameter
from ucplab.grid import make_grid
from ucplab.operators import (fd_gradient, frac_laplacian, frac_symbol, identity, kinetic_nbody, multiply,
                              neg_laplacian, operator_sum, spectral_gradient, verify_symbol_inequality, wavenumbers)


def test_wavenumbers_layout():
    k = wavenumbers(8, np.pi)
    np.testing.assert_allclose(k, [0, 1, 2, 3, -4, -3, -2, -1])


@pytest.mark.parametrize("s", [0.25, 0.5, 1.0, 1.5])
def test_frac_laplacian_plane_wave(s):
    g = make_grid(1, 1, 64, 2.0)
    x = g.axis()
    j = 5
    k = np.pi * j / g.L
    u = np.cos(k * x)
    out = frac_laplacian(g, s).apply(u)
    np.testing.assert_allclose(out, k ** (2 * s) * u, atol=1e-11 * k ** (2 * s))


def test_frac_laplacian_zero_mode_and_range():
    g = make_grid(1, 1, 16, 1.0)
    np.testing.assert_allclose(frac_laplacian(g, 0.75).apply(np.ones(16)), 0.0, atol=1e-14)
    with pytest.raises(InvalidParameter):
        frac_symbol(g, 2.5)


@given(st.integers(1, 20), st.integers(1, 20))
@settings(max_examples=25, deadline=None)
def test_semigroup(a, b):
    # (-lap)^s1 (-lap)^s2 = (-lap)^(s1+s2)
    g = make_grid(1, 1, 32, 1.0)
    s1, s2 = a / 40, b / 40
    u = np.sin(3 * np.pi * g.axis()) + 0.5 * np.cos(np.pi * g.axis())
    lhs = frac_laplacian(g, s1).apply(frac_laplacian(g, s2).apply(u))
    rhs = frac_laplacian(g, s1 + s2).apply(u)
    np.testing.assert_allclose(lhs, rhs, atol=1e-10 * np.abs(rhs).max())


@pytest.mark.parametrize("boundary", ["periodic", "dirichlet-box"])
def test_fd_laplacian_symbol_matches_dense(boundary):
    g = make_grid(1, 1, 16, 1.0, boundary)
    A = neg_laplacian(g, "fd").to_dense()
    np.testing.assert_allclose(A, A.T, atol=1e-12)
    np.testing.assert_allclose(np.sort(np.linalg.eigvalsh(A)), np.sort(neg_laplacian(g, "fd").symbol.ravel()),
                               rtol=1e-10, atol=1e-10)


def test_kinetic_is_kronecker_sum(rng):
    # dense N-body kinetic = T (x) I + I (x) T
    g = make_grid(1, 2, 8, 1.0)
    T1 = neg_laplacian(g.one_particle(), "spectral").to_dense()
    K = np.kron(T1, np.eye(8)) + np.kron(np.eye(8), T1)
    np.testing.assert_allclose(kinetic_nbody(g).to_dense(), K, atol=1e-10)
    gf = make_grid(1, 2, 8, 1.0, "dirichlet-box")
    T1 = neg_laplacian(gf.one_particle(), "fd").to_dense()
    K = np.kron(T1, np.eye(8)) + np.kron(np.eye(8), T1)
    np.testing.assert_allclose(kinetic_nbody(gf, "fd").to_dense(), K, atol=1e-10)


def test_kinetic_complex_input(rng):
    g = make_grid(2, 1, 16, 1.0)
    u = rng.standard_normal(g.shape)
    v = rng.standard_normal(g.shape)
    T = kinetic_nbody(g)
    np.testing.assert_allclose(T.apply(u + 1j * v), T.apply(u) + 1j * T.apply(v), atol=1e-10)


def test_spectral_gradient_and_fd():
    g = make_grid(1, 1, 128, np.pi)
    x = g.axis()
    (gs,) = spectral_gradient(np.sin(2 * x), g)
    np.testing.assert_allclose(gs.real, 2 * np.cos(2 * x), atol=1e-11)
    (gf,) = fd_gradient(np.sin(2 * x), g)
    np.testing.assert_allclose(gf, 2 * np.cos(2 * x), atol=5e-3)


def test_operator_algebra(grid1, rng):
    u = rng.standard_normal(64)
    f = rng.standard_normal(64)
    H = operator_sum(identity(grid1).scaled(2.0), multiply(f, grid1))
    np.testing.assert_allclose(H.apply(u), 2 * u + f * u)
    assert H.find(lambda o: o.kind == "multiply")


@pytest.mark.parametrize("delta", [0.0, 0.1, 0.25])
@pytest.mark.parametrize("N", [2, 3])
def test_symbol_inequality_small(delta, N):
    rep = verify_symbol_inequality(delta, 20_000, N, seed=1)
    assert rep.violations == 0
    # delta = 1/4 is the equality case; only roundoff separates the sides
    assert rep.max_gap <= 1e-12
    with pytest.raises(InvalidParameter):
        verify_symbol_inequality(0.3, 10, N, 0)
