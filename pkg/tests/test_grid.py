import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ucplab.errors import BudgetExceeded, GeometryError, InvalidParameter
from ucplab.grid import (GridFunction, bump_profile, cutoff_constants, cutoff_eta, load_gridfunction, make_grid,
                         save_gridfunction, smooth_step, weighted_ball_norm)


@pytest.mark.parametrize("m,L", [(8, 1.0), (64, 3.7), (256, 10.0), (1024, 0.3)])
def test_spacing_is_exact(m, L):
    g = make_grid(1, 1, m, L)
    assert g.h * m == 2 * L
    assert g.axis()[0] == -L
    # origin is a node of periodic grids
    assert np.any(g.axis() == 0.0)


def test_dirichlet_nodes_are_cell_centres():
    g = make_grid(1, 1, 10, 1.0, "dirichlet-box")
    np.testing.assert_allclose(g.axis(), -1.0 + (np.arange(10) + 0.5) * 0.2)


@pytest.mark.parametrize("kw,exc", [
    (dict(d=1, N=1, m=9, L=1.0), InvalidParameter),
    (dict(d=1, N=1, m=4, L=1.0), InvalidParameter),
    (dict(d=0, N=1, m=8, L=1.0), InvalidParameter),
    (dict(d=1, N=1, m=8, L=-1.0), InvalidParameter),
    (dict(d=3, N=2, m=8, L=1.0), InvalidParameter),
    (dict(d=2, N=2, m=128, L=1.0), BudgetExceeded),
])
def test_make_grid_rejects(kw, exc):
    with pytest.raises(exc):
        make_grid(**kw)


def test_bad_boundary():
    with pytest.raises(InvalidParameter):
        make_grid(1, 1, 8, 1.0, "neumann")


def test_points_and_particle_axes():
    g = make_grid(1, 2, 8, 1.0)
    assert g.n == 2 and g.shape == (8, 8)
    assert g.points().shape == (8, 8, 2)
    assert g.particle_axes(1) == (1,)
    assert g.one_particle().shape == (8,)


def test_gridfunction_is_immutable(grid1):
    f = GridFunction(grid1, np.ones(64))
    with pytest.raises(ValueError):
        f.values[0] = 2.0
    with pytest.raises(AttributeError):
        f.values = None
    with pytest.raises(InvalidParameter):
        GridFunction(grid1, np.ones(63))
    with pytest.raises(InvalidParameter):
        GridFunction(grid1, np.full(64, np.nan))


def test_norm_and_inner(grid1, rng):
    a = GridFunction(grid1, rng.standard_normal(64) + 1j * rng.standard_normal(64))
    assert a.inner(a).real == pytest.approx(a.norm() ** 2, rel=1e-14)
    assert a.normalized().norm() == pytest.approx(1.0, rel=1e-14)


def test_bump_profile():
    t = np.array([-1.5, -1.0, 0.0, 0.5, 1.0])
    b = bump_profile(t)
    assert b[0] == b[1] == b[4] == 0.0
    assert b[2] == 1.0
    assert b[3] == pytest.approx(np.exp(1 - 1 / 0.75))


@given(st.floats(0.05, 0.95))
@settings(max_examples=40, deadline=None)
def test_smooth_step_derivatives_match_differences(r):
    h = 1e-6
    eta, d1, d2 = smooth_step(np.array([r - h, r, r + h]), 0.3, 0.8)
    assert d1[1] == pytest.approx((eta[2] - eta[0]) / (2 * h), abs=1e-6)
    assert d2[1] == pytest.approx((eta[2] - 2 * eta[1] + eta[0]) / h**2, abs=2e-3)


def test_cutoff_eta_and_constants():
    g = make_grid(2, 1, 128, 2.0)
    eta = cutoff_eta(g, 0.25)
    r = g.radius()
    assert np.all(eta.values[r <= 0.25] == 1.0)
    assert np.all(eta.values[r >= 0.5] == 0.0)
    c1 = cutoff_constants(g, 0.25)
    c2 = cutoff_constants(make_grid(2, 1, 128, 4.0), 0.5)
    # scale-free: same constants at twice the scale on the dilated grid
    assert c1.grad == pytest.approx(c2.grad, rel=1e-12)
    with pytest.raises(GeometryError):
        cutoff_constants(g, 0.5, center=[1.5, 0.0])


def test_weighted_ball_norm_power_law():
    # int_{-1}^{1} |x|^{-tau} x^4 dx = 2/(5 - tau)
    g = make_grid(1, 1, 2**16, 2.0)
    psi = GridFunction(g, g.axis() ** 2)
    for tau in (0.0, 1.0, 2.0):
        q = weighted_ball_norm(psi, tau, 1.0)
        assert q.value == pytest.approx(2 / (5 - tau), rel=1e-3)
    assert weighted_ball_norm(psi, 1.0, 1.0).n_dropped == 1
    with pytest.raises(InvalidParameter):
        weighted_ball_norm(psi, -1.0, 1.0)


def test_save_load_roundtrip(tmp_path, rng):
    g = make_grid(2, 1, 16, 1.0)
    f = GridFunction(g, rng.standard_normal(g.shape) + 1j * rng.standard_normal(g.shape))
    save_gridfunction(f, tmp_path / "f")
    back = load_gridfunction(tmp_path / "f")
    assert back.grid == g
    np.testing.assert_array_equal(back.values, f.values)
