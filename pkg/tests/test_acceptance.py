"""Acceptance criteria 1-15, each at its stated tolerance.

Every test records one PASS/FAIL line; the table is printed at the end of the
pytest run. A criterion that does not hold is left failing.
"""

import json
import time
from fractions import Fraction

import numpy as np
import pytest

from ucplab.carleman import (DEFAULT_TAUS, constant_propagation_check, default_shell_family, eps_constants,
                             estimate_kappa_and_eps, sobolev_split_bound, sqrt_monotone_check)
from ucplab.cli import main
from ucplab.dft import hk_verify, one_body_sum, one_particle_density
from ucplab.grid import GridFunction, bump_profile, make_grid
from ucplab.hamiltonian import PotentialSpec as P, build_hamiltonian
from ucplab.operators import frac_laplacian, verify_symbol_inequality
from ucplab.spectra import dense_oracle, solve_ground
from ucplab.ucp import derivative_vanishing_check, weighted_equivalence_identity, zero_set_fraction


@pytest.fixture(scope="module")
def shell_sweeps():
    """s = 0 sweeps of the default family in n = 1 and n = 2 (shared by criteria 8 and 13)."""
    out = {}
    for n in (1, 2):
        t0 = time.perf_counter()
        rep = estimate_kappa_and_eps(default_shell_family(n), DEFAULT_TAUS, s=0.0, xi=0.1, d=n, N=1)
        out[n] = (rep, time.perf_counter() - t0)
    return out


def test_c01_fractional_laplacian_exact(acceptance_log):
    t0 = time.perf_counter()
    g = make_grid(1, 1, 256, 3.0)
    x = g.axis()
    worst, worst_zero, worst_field = 0.0, 0.0, 0.0
    for s in (0.25, 0.65, 0.75, 1.0, 1.3):
        op = frac_laplacian(g, s)
        top = (np.pi * 128 / g.L) ** (2 * s)
        for j in range(-127, 128):
            k = np.pi * j / g.L
            u = np.exp(1j * k * x)
            Au = op.apply(u)
            # multiplier applied to the plane wave
            lam = np.vdot(u, Au).real / np.vdot(u, u).real
            if j == 0:
                worst_zero = max(worst_zero, abs(lam))
            else:
                worst = max(worst, abs(lam - abs(k) ** (2 * s)) / abs(k) ** (2 * s))
            worst_field = max(worst_field, np.max(np.abs(Au - abs(k) ** (2 * s) * u)) / top)
    dt = time.perf_counter() - t0
    ok = worst < 1e-12 and worst_zero < 1e-12 and dt < 1.0
    assert acceptance_log(1, ok, f"max rel multiplier error {worst:.2e} (< 1e-12), zero mode {worst_zero:.1e}, "
                                 f"pointwise error / ||A|| {worst_field:.1e}, {dt:.2f}s (< 1s)")


def test_c02_oracle_equivalence(acceptance_log):
    t0 = time.perf_counter()
    H = build_hamiltonian(P.harmonic(1.0), P.soft_coulomb(1.0, 1.0), make_grid(1, 2, 32, 5.0))
    it = solve_ground(H, 1, 1e-11, seed=0)
    ex = dense_oracle(H)
    gap = abs(it.eigenvalues[0] - ex.eigenvalues[0])
    dt = time.perf_counter() - t0
    ok = gap < 1e-9 and dt < 10
    assert acceptance_log(2, ok, f"|E_iter - E_dense| = {gap:.2e} (< 1e-9), {dt:.2f}s (< 10s)")


def test_c03_harmonic_ground_energy(acceptance_log):
    t0 = time.perf_counter()
    H = build_hamiltonian(P.harmonic(1.0), None, make_grid(1, 1, 2048, 10.0), "spectral")
    E = solve_ground(H, 1, 1e-11, seed=0).eigenvalues[0]
    dt = time.perf_counter() - t0
    # -u'' + x^2 u = E u has ground level 1 (Hermite function e^{-x^2/2})
    ok = abs(E - 1.0) < 1e-8 and dt < 5
    assert acceptance_log(3, ok, f"E0 = {E:.12f}, |E0 - 1| = {abs(E - 1):.2e} (< 1e-8), {dt:.2f}s (< 5s)")


def test_c04_density_consistency(acceptance_log):
    rng = np.random.default_rng(4)
    kinds = [P.harmonic(1.0), P.soft_coulomb(1.0, 0.7), P.gaussian_well(2.0, 0.8),
             P.power_singular(0.5, cap=10.0), P.sum_of(P.harmonic(0.5), P.gaussian_well(-1.0, 0.4))]
    shapes = [(1, 1, 128), (1, 2, 32), (1, 3, 16), (2, 1, 32), (2, 2, 8)]
    worst_norm, worst_f = 0.0, 0.0
    for i in range(20):
        d, N, m = shapes[i % len(shapes)]
        L = float(rng.uniform(3.0, 5.0))
        g = make_grid(d, N, m, L, "periodic" if i % 2 == 0 else "dirichlet-box")
        v = kinds[int(rng.integers(len(kinds)))]
        w = P.soft_coulomb(float(rng.uniform(0.5, 1.5)), 1.0) if N > 1 else None
        psi = solve_ground(build_hamiltonian(v, w, g), 1, 1e-9, seed=i).ground
        rho = one_particle_density(psi)
        worst_norm = max(worst_norm, abs(rho.total() - N))
        g1 = g.one_particle()
        for _ in range(5):
            a, b = rng.normal(size=2)
            f = np.broadcast_to(sum(np.cos(a * c + b) for c in g1.coords()), g1.shape)
            lhs = rho.integrate(f)
            rhs = float(np.sum(psi.abs2() * one_body_sum(f, g)) * g.cell_volume)
            worst_f = max(worst_f, abs(lhs - rhs) / max(abs(rhs), 1e-300))
    ok = worst_norm < 1e-10 and worst_f < 1e-10
    assert acceptance_log(4, ok, f"max |h^d sum rho - N| = {worst_norm:.1e}, max rel marginal gap = {worst_f:.1e}"
                                 " (both < 1e-10)")


def test_c05_hk_constant_shift(acceptance_log):
    t0 = time.perf_counter()
    v1, w = P.harmonic(1.0), P.soft_coulomb(1.0, 1.0)
    g = make_grid(1, 2, 64, 6.0)
    rows, ok_gap, ok_c, ok_formula = [], True, True, True
    for c in (-2.0, 0.5, 3.0):
        rep = hk_verify(v1, P.sum_of(v1, P.constant(c)), w, g, tol=1e-11)
        ok_gap &= rep.density_gap_L1 < 1e-9
        ok_c &= abs(rep.recovered_c - c) < 1e-8
        ok_formula &= abs(rep.recovered_c - rep.c_formula) < 1e-8
        rows.append(f"c={c:+g}: L1={rep.density_gap_L1:.1e} rec={rep.recovered_c:.10f} (E1-E2)/N={rep.c_formula:.10f}")
    dt = time.perf_counter() - t0
    # for v2 = v1 + c the ground energies obey E2 = E1 + N c, so (E1 - E2)/N = -c; the third clause can
    # only hold at c = 0 and is left failing
    ok = ok_gap and ok_c and ok_formula and dt < 60
    detail = (f"L1 gap < 1e-9: {ok_gap}; recovered_c ~ c: {ok_c}; recovered_c ~ (E1-E2)/N: {ok_formula}; "
              f"{dt:.1f}s | " + "; ".join(rows))
    assert acceptance_log(5, ok, detail)


@pytest.mark.filterwarnings("ignore:support mask")
def test_c06_hk_distinguishability(acceptance_log):
    w = P.soft_coulomb(1.0, 1.0)
    harmonic = P.harmonic(1.0)
    double_well = P.sum_of(P.harmonic(1.0), P.gaussian_well(-3.0, 0.5))
    gaps = [hk_verify(harmonic, double_well, w, make_grid(1, 2, m, 8.0), tol=1e-9).density_gap_L1
            for m in (256, 512)]
    drift = abs(gaps[1] / gaps[0] - 1)
    ok = gaps[0] > 1e-3 and drift < 0.2
    assert acceptance_log(6, ok, f"L1 gap {gaps[0]:.4f} at m=256 (> 1e-3), {gaps[1]:.4f} at m=512, "
                                 f"drift {drift:.1e} (< 20%)")


def test_c07_discrete_non_vanishing(acceptance_log):
    w = P.soft_coulomb(1.0, 1.0)
    suite = {"harmonic": P.harmonic(1.0), "soft-coulomb": P.soft_coulomb(1.0, 0.5),
             "capped |x|^-1/2": P.power_singular(0.5, cap=50.0), "gaussian": P.gaussian_well(2.0, 0.7),
             "free": P.zero(), "harmonic + capped |x|^-1": P.sum_of(P.harmonic(1.0), P.power_singular(1.0, cap=20.0))}
    bad = []
    for name, v in suite.items():
        for d, N, m in ((1, 1, 256), (1, 2, 64), (2, 1, 64)):
            g = make_grid(d, N, m, 4.0, "dirichlet-box")
            res = solve_ground(build_hamiltonian(v, w if N > 1 else None, g, "fd"), 1, 1e-9, seed=0)
            frac = zero_set_fraction(res.ground, 1e-12)
            if frac != 0.0 or not res.converged:
                bad.append(f"{name} d={d} N={N}: fraction {frac}, converged {res.converged}")
    ok = not bad
    assert acceptance_log(7, ok, f"{len(suite) * 3} FD ground states, zero_set_fraction(1e-12) = 0 for all"
                          if ok else "; ".join(bad))


def test_c08_carleman_s0_slope(acceptance_log, shell_sweeps):
    parts, ok = [], True
    for n, (rep, dt) in shell_sweeps.items():
        good = rep.slope_log_kappa_vs_log_tau <= 0.05 and rep.n_functions >= 20 and dt < 120
        ok &= good
        parts.append(f"n={n}: {rep.n_functions} functions, slope {rep.slope_log_kappa_vs_log_tau:+.3f}, "
                     f"kappa_hat {rep.kappa_hat:.4f}, {dt:.1f}s")
    assert acceptance_log(8, ok, "; ".join(parts) + " (slope <= 0.05, < 2 min)")


def test_c09_weighted_identity(acceptance_log):
    g = make_grid(1, 1, 4096, 1.5)
    r = g.radius()
    cut = bump_profile(r / 1.2)
    fields = {"|x|^3": r**3 * cut, "|x|^5": r**5 * cut,
              "exp(-1/x^2)": np.exp(-1.0 / np.where(r > 0, r, 1.0) ** 2) * (r > 0) * cut}
    worst, worst_ratio, ok = 0.0, 1.0, True
    for f in fields.values():
        psi = GridFunction(g, f)
        for k in (2, 3, 4):
            res = weighted_equivalence_identity(psi, k)
            ratio = res.rel_gap_half / res.rel_gap if res.rel_gap > 0 else 1.0
            ratio = max(ratio, 1.0 / ratio) if ratio > 0 else np.inf
            worst, worst_ratio = max(worst, res.rel_gap), max(worst_ratio, ratio)
            ok &= res.rel_gap < 1e-4 and ratio < 10
    assert acceptance_log(9, ok, f"max rel_gap {worst:.2e} (< 1e-4), max change on halving {worst_ratio:.2f}x (< 10x)")


def test_c10_derivative_ratios(acceptance_log):
    g = make_grid(1, 1, 2**14, 2.0)
    r = g.radius()
    eps = [2.0**-j for j in range(2, 7)]
    v1, v2, v2s = [], [], []
    for p in (2, 3, 4):
        rep = derivative_vanishing_check(GridFunction(g, r**p * bump_profile(r / 1.5)), eps_list=eps)
        v1.append(rep.variation1)
        v2.append(rep.variation2)
        v2s.append(max(rep.ratio2_scaled) / min(rep.ratio2_scaled))
    ok = max(v1) < 4 and max(v2) < 4
    # rho2 puts eps^4 over an unscaled |grad psi|^2 term, so for |x|^m it scales like eps^2;
    # the dilation-invariant variant is reported alongside
    assert acceptance_log(10, ok, f"max variation rho1 {max(v1):.2f}, rho2 {max(v2):.3g} (both < 4); "
                                  f"scale-invariant rho2 variant {max(v2s):.2f}")


def test_c11_symbol_inequality(acceptance_log):
    total, worst = 0, -np.inf
    for N in (2, 3, 5):
        for delta in (0.0, 0.1, 0.2):
            rep = verify_symbol_inequality(delta, 10**6, N, seed=11 + N)
            total += rep.violations
            worst = max(worst, rep.max_gap)
    ok = total == 0
    assert acceptance_log(11, ok, f"9 x 1e6 tuples with |k_i| >= 1: {total} violations, max rel excess {worst:.2e}")


def test_c12_sqrt_monotone(acceptance_log):
    res = sqrt_monotone_check(1000, 16, seed=12)
    ok = res.min_gap >= -1e-10
    assert acceptance_log(12, ok, f"1000 pairs at dim 16: min eig(sqrt B - sqrt A) = {res.min_gap:.2e} (>= -1e-10)")


def test_c13_constant_propagation(acceptance_log, shell_sweeps):
    exact = all(rep.eps_identity_exact for rep, _ in shell_sweeps.values())
    for rep, _ in shell_sweeps.values():
        for N in range(1, 6):
            e = eps_constants(rep.kappa_hat, N)
            exact &= Fraction(e["eps_dN_exact"]) * N * (N + 1) ** 2 == 4 * Fraction(e["eps_main_exact"])
    sc = P.soft_coulomb(1.0, 0.5)
    prop = constant_propagation_check(sc, sc, 1.0, 0.1, 1.0, m=64, N=2)
    ok = exact and prop.eps_direct <= prop.bound + 1e-8
    assert acceptance_log(13, ok, f"exact identity in all runs: {exact}; d=1 N=2: eps_direct {prop.eps_direct:.4f}"
                                  f" <= N(N+1)^2/4 x {prop.eps_particle:.4f} = {prop.bound:.4f}")


def test_c14_split_monotone(acceptance_log):
    v = P.power_singular(0.4, cap=1e4)
    Ms = [2.0**j for j in range(9)]
    eps = [sobolev_split_bound(v, 2.0, 1, 1.3, 1.0, M, 2.0).eps_min for M in Ms]
    mono = all(b <= a for a, b in zip(eps, eps[1:]))
    ok = mono and eps[-1] < 0.1 * eps[0]
    assert acceptance_log(14, ok, f"eps(M=1) {eps[0]:.3f} -> eps(M=256) {eps[-1]:.3f} "
                                  f"(ratio {eps[-1] / eps[0]:.3f} < 0.1), nonincreasing: {mono}")


CONFIGS = {
    "hk-verify": """
experiment = "hk-verify"
[grid]
d = 1
N = 2
m = 32
L = 5.0
[potentials]
v = {kind = "harmonic"}
v2 = {kind = "sum", terms = [{kind = "harmonic"}, {kind = "constant", c = 0.5}]}
w = {kind = "soft-coulomb"}
""",
    "density": """
experiment = "density"
[grid]
d = 2
N = 1
m = 32
L = 4.0
[potentials]
v = {kind = "soft-coulomb", a = 0.5}
""",
    "carleman": """
experiment = "carleman"
[params]
d = 1
s = 0.0
xi = 0.1
tau_range = [8.0, 32.0]
centers = [0.1, 0.2]
""",
    "opineq": """
experiment = "opineq"
[grid]
d = 1
N = 1
m = 64
L = 4.0
[potentials]
v = {kind = "power-singular", alpha = 0.4, cap = 100.0}
[params]
sampling_trials = 200
split_M = [1.0, 16.0]
split_s = 1.3
sqrt_trials = 10
""",
    "ucp-scan": """
experiment = "ucp-scan"
[grid]
d = 1
N = 1
m = 256
L = 4.0
boundary = "dirichlet-box"
[potentials]
v = {kind = "harmonic"}
[params]
identity_k = [2]
""",
}


def test_c15_determinism(acceptance_log, tmp_path, capsys):
    same, bad = 0, []
    for exp, text in CONFIGS.items():
        cfg = tmp_path / f"{exp}.toml"
        cfg.write_text(text)
        for out in ("one", "two"):
            assert main([exp, "--config", str(cfg), "--out", str(tmp_path / exp / out)]) == 0
        for f in sorted((tmp_path / exp / "one").glob("*.json")):
            if f.name == "manifest.json":
                # wall-clock timings live only in the manifest
                a = json.loads(f.read_text())
                b = json.loads((tmp_path / exp / "two" / f.name).read_text())
                a_ok = {k: v for k, v in a.items() if k not in ("wall_time", "timings")}
                b_ok = {k: v for k, v in b.items() if k not in ("wall_time", "timings")}
                good = a_ok == b_ok
            else:
                good = f.read_bytes() == (tmp_path / exp / "two" / f.name).read_bytes()
            same += good
            if not good:
                bad.append(f"{exp}/{f.name}")
    capsys.readouterr()
    ok = not bad
    assert acceptance_log(15, ok, f"{same} JSON reports byte-identical across reruns of {len(CONFIGS)} experiments"
                          + ("" if ok else f"; differing: {bad}"))
