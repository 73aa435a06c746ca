import numpy as np
import pytest

from ucplab.dft import density_gaps, hk_recover_constant, hk_verify, one_body_sum, one_particle_density
from ucplab.grid import GridFunction, make_grid
from ucplab.hamiltonian import PotentialSpec


def test_density_of_product_state():
    # psi(x, y) = f(x) f(y) with ||f|| = 1 gives rho = 2 |f|^2
    g = make_grid(1, 2, 32, 3.0)
    x = g.axis()
    f = np.exp(-x**2)
    f /= np.sqrt(np.sum(f**2) * g.h)
    rho = one_particle_density(GridFunction(g, np.outer(f, f)))
    np.testing.assert_allclose(rho.values, 2 * f**2, atol=1e-14)
    assert rho.total() == pytest.approx(2.0, rel=1e-13)


def test_density_integrates_one_body_observable(rng):
    g = make_grid(1, 3, 16, 2.0)
    psi = GridFunction(g, rng.standard_normal(g.shape)).normalized()
    f = rng.standard_normal(16)
    rho = one_particle_density(psi)
    S = one_body_sum(f, g)
    assert rho.integrate(f) == pytest.approx(float(np.sum(psi.abs2() * S) * g.cell_volume), rel=1e-12)


def test_density_table_and_dict():
    g = make_grid(2, 1, 8, 1.0)
    rho = one_particle_density(GridFunction(g, np.ones(g.shape)).normalized())
    cols, rows, comments = rho.table()
    assert cols == ["x1", "x2", "rho"]
    assert len(rows) == 64
    assert any("normalisation" in c for c in comments)
    assert rho.to_dict()["N"] == 1


def test_density_gaps_zero_on_identical(rng):
    g = make_grid(1, 1, 16, 1.0)
    rho = one_particle_density(GridFunction(g, rng.standard_normal(16)).normalized())
    assert density_gaps(rho, rho) == (0.0, 0.0)


@pytest.mark.parametrize("c", [-1.0, 2.5])
def test_hk_constant_shift_single_particle(c):
    g = make_grid(1, 1, 128, 6.0)
    v1 = PotentialSpec.harmonic(1.0)
    v2 = PotentialSpec.sum_of(v1, PotentialSpec.constant(c))
    rep = hk_verify(v1, v2, None, g, tol=1e-11)
    assert rep.density_gap_L1 < 1e-9
    assert rep.E2 - rep.E1 == pytest.approx(c, abs=1e-9)
    assert rep.recovered_c == pytest.approx(c, abs=1e-9)
    assert rep.c_formula == pytest.approx(-c, abs=1e-9)
    assert rep.identity_checked and abs(rep.identity_gap) < 1e-9


def test_hk_recover_on_exact_relation():
    g = make_grid(1, 2, 16, 2.0)
    v1, v2 = PotentialSpec.zero(), PotentialSpec.constant(0.75)
    psi = GridFunction(g, np.ones(g.shape)).normalized()
    res = hk_recover_constant(psi, v1, v2, 0.0, 1.5)
    assert res.recovered_c == pytest.approx(0.75, rel=1e-14)
    assert res.residual_weighted == pytest.approx(0.0, abs=1e-14)


def test_hk_distinguishes_non_constant_difference():
    g = make_grid(1, 1, 128, 6.0)
    rep = hk_verify(PotentialSpec.harmonic(1.0), PotentialSpec.harmonic(2.0), None, g)
    assert rep.density_gap_L1 > 1e-2
    assert not rep.identity_checked
    # both variational slacks are strictly positive
    assert rep.cross_energy_gap > 0 and rep.cross_energy_gap_2 > 0
