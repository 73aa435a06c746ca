import numpy as np
import pytest

from ucplab.errors import BudgetExceeded
from ucplab.grid import make_grid
from ucplab.hamiltonian import PotentialSpec, build_hamiltonian
from ucplab.spectra import dense_oracle, solve_ground


@pytest.mark.parametrize("d,N,m,kinetic", [(1, 1, 64, "spectral"), (1, 2, 24, "fd"), (2, 1, 16, "spectral")])
def test_iterative_matches_dense(d, N, m, kinetic):
    boundary = "periodic" if kinetic == "spectral" else "dirichlet-box"
    g = make_grid(d, N, 32 if (kinetic == "spectral" and m == 24) else m, 4.0, boundary)
    H = build_hamiltonian(PotentialSpec.harmonic(), PotentialSpec.soft_coulomb(), g, kinetic)
    it = solve_ground(H, 2, 1e-10, seed=3)
    ex = dense_oracle(H)
    assert it.converged
    np.testing.assert_allclose(it.eigenvalues, ex.eigenvalues[:2], atol=1e-9)
    assert abs(abs(it.ground.inner(ex.ground)) - 1.0) < 1e-8


def test_ground_state_normalised_and_deterministic():
    g = make_grid(1, 1, 128, 6.0)
    H = build_hamiltonian(PotentialSpec.harmonic(), None, g)
    a = solve_ground(H, 1, 1e-10, seed=7)
    b = solve_ground(H, 1, 1e-10, seed=7)
    assert a.ground.norm() == pytest.approx(1.0, rel=1e-12)
    np.testing.assert_array_equal(a.ground.values, b.ground.values)
    assert a.eigenvalues[0] == pytest.approx(1.0, abs=1e-8)
    assert not a.degenerate


def test_free_box_levels():
    # cell-centred Dirichlet FD is DST-I with ghost zeros one spacing past the end nodes:
    # lambda_j = (4/h^2) sin^2(j pi / (2(m+1)))
    g = make_grid(1, 1, 200, 1.0, "dirichlet-box")
    r = solve_ground(build_hamiltonian(PotentialSpec.zero(), None, g, "fd"), 3, 1e-11)
    j = np.arange(1, 4)
    want = 4 / g.h**2 * np.sin(j * np.pi / (2 * (g.m + 1))) ** 2
    np.testing.assert_allclose(r.eigenvalues, want, rtol=1e-9)


def test_degeneracy_detected():
    g = make_grid(2, 1, 16, 1.0, "dirichlet-box")
    r = solve_ground(build_hamiltonian(PotentialSpec.zero(), None, g, "fd"), 2, 1e-10)
    # the first excited level of the square is doubly degenerate
    assert r.degenerate


def test_dense_budget():
    g = make_grid(2, 1, 128, 1.0)
    with pytest.raises(BudgetExceeded):
        dense_oracle(build_hamiltonian(PotentialSpec.zero(), None, g))
