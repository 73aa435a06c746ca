"""Quadratic-form inequalities ``|V|^2 1_{B_R} <= eps (-lap)^p + c`` and their supporting checks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
import scipy.fft as sfft
import scipy.linalg as sla
from scipy.integrate import quad
from scipy.optimize import brentq
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh
from scipy.special import gamma

from ..errors import GeometryError, IntegrabilityError, InvalidParameter, NoConvergence
from ..grid import Grid, GridFunction, _as_center, make_grid
from ..hamiltonian import AssembledPotential, PotentialSpec, assemble_total_potential
from ..operators import frac_symbol

SIGMA_REL = 1e-8


@dataclass
class InequalityReport:
    delta: Optional[float]
    R: float
    c: float
    eps_min: float
    method: str
    sigma: Optional[float] = None
    eps_min_10sigma: Optional[float] = None
    M: Optional[float] = None
    constant: Optional[float] = None
    constant_label: Optional[str] = None
    c_extra: float = 0.0
    converged: bool = True
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["report"] = "inequality"
        return d


def _form_exponent(delta: float) -> float:
    if not 0.0 <= delta <= 0.25:
        raise InvalidParameter(f"delta must lie in [0, 1/4], got {delta}")
    return 1.5 - 2.0 * delta


def _masked_square(V, R, center):
    vals = V.values.values if isinstance(V, AssembledPotential) else np.asarray(
        V.values if isinstance(V, GridFunction) else V)
    grid = V.grid
    if not grid.periodic:
        raise InvalidParameter("the pencil needs a periodic grid")
    c = _as_center(grid, center)
    if R <= 0 or np.any(np.abs(c) + 2 * R > grid.L * (1 + 1e-12)):
        raise GeometryError(f"ball B_{R}({c.tolist()}) needs padding factor >= 2 inside [-{grid.L}, {grid.L}]")
    q = np.abs(vals) ** 2 * (grid.radius(c) <= R)
    return grid, q


class _Pencil:
    """``T (M_q - c) T`` with ``T = (A + sigma)^{-1/2}`` and ``A = |k|^{2p}``."""

    def __init__(self, grid: Grid, q: np.ndarray, p: float, c: float, sigma: float):
        self.grid, self.q, self.c = grid, q, c
        A = frac_symbol(grid, p)
        self.T = 1.0 / np.sqrt(A + sigma)

    def _t(self, x):
        axes = tuple(range(self.grid.n))
        return sfft.ifftn(sfft.fftn(x, axes=axes) * self.T[..., None], axes=axes).real

    def matmat(self, X: np.ndarray) -> np.ndarray:
        g = self.grid
        Y = self._t(X.reshape(g.shape + (X.shape[1],)))
        Z = self._t(self.q[..., None] * Y - self.c * Y)
        return Z.reshape(X.shape)

    def operator(self) -> LinearOperator:
        size = self.grid.size
        return LinearOperator((size, size), matvec=lambda v: self.matmat(v.reshape(-1, 1)).ravel(),
                              matmat=self.matmat, dtype=np.float64)


def _pencil_max(grid, q, p, c, sigma, tol, seed):
    if not np.any(q):
        # diagonal pencil -c/(A + sigma)
        A = frac_symbol(grid, p)
        return float(np.max(-c / (A + sigma)))
    op = _Pencil(grid, q, p, c, sigma).operator()
    v0 = np.random.default_rng(seed).standard_normal(grid.size)
    try:
        vals = eigsh(op, k=1, which="LA", v0=v0, tol=tol, return_eigenvectors=False,
                     ncv=min(grid.size - 1, 40), maxiter=20 * grid.size)
    except ArpackNoConvergence as exc:
        raise NoConvergence(f"pencil iteration did not converge: {exc}") from exc
    return float(vals[0])


def min_eps_form_inequality(V, R: float, delta: float, c: float, center=None, sigma_rel: float = SIGMA_REL,
                            tol: float = 1e-12, seed: int = 0) -> InequalityReport:
    """Smallest ``eps`` with ``int_{B_R}|V|^2|u|^2 <= eps A(u) + c ||u||^2`` on the grid.

    ``A(u) = ||(-lap)^{3/4 - delta} u||^2``. The value is the top eigenvalue of
    ``(A + sigma)^{-1/2} (|V|^2 1_{B_R} - c) (A + sigma)^{-1/2}`` clipped at 0,
    with ``sigma = sigma_rel * max(A)`` regularising the zero mode. A second solve
    at ``10*sigma`` is reported for sensitivity.
    """
    p = _form_exponent(delta)
    grid, q = _masked_square(V, R, center)
    sigma = sigma_rel * float(frac_symbol(grid, p).max())
    lam = _pencil_max(grid, q, p, c, sigma, tol, seed)
    lam10 = _pencil_max(grid, q, p, c, 10 * sigma, tol, seed)
    return InequalityReport(
        delta=delta, R=R, c=c, eps_min=lam if lam > 0 else 0.0, method="pencil", sigma=sigma,
        eps_min_10sigma=lam10 if lam10 > 0 else 0.0,
        details={"lambda_max": lam, "lambda_max_10sigma": lam10, "exponent": p, "grid": grid.describe(),
                 "sigma_rel": sigma_rel},
    )


def form_sampling_bound(V, R: float, delta: float, c: float, trials: int = 10_000, seed: int = 0,
                        center=None, sigma_rel: float = SIGMA_REL, batch: int = 250) -> InequalityReport:
    """Largest sampled ``(Q(u) - c||u||^2) / (A(u) + sigma||u||^2)`` over random smooth trial fields.

    A lower bound for the pencil value with the same ``sigma``. Trials are
    Gaussian random fields with random correlation length and smoothness, half
    of them localised by a Gaussian envelope centred in the ball.
    """
    p = _form_exponent(delta)
    grid, q = _masked_square(V, R, center)
    A = frac_symbol(grid, p)
    sigma = sigma_rel * float(A.max())
    k2 = frac_symbol(grid, 1.0)
    rng = np.random.default_rng(seed)
    axes = tuple(range(grid.n))
    kmin, kmax = math.pi / grid.L, math.pi * grid.m / (2 * grid.L)
    r_all = grid.coords()
    c0 = _as_center(grid, center)
    best = -math.inf
    done = 0
    while done < trials:
        b = min(batch, trials - done)
        k0 = np.exp(rng.uniform(math.log(kmin), math.log(kmax), b))
        beta = rng.uniform(1.0, 6.0, b)
        coef = rng.standard_normal(grid.shape + (b,)) + 1j * rng.standard_normal(grid.shape + (b,))
        coef *= (1.0 + k2[..., None] / k0**2) ** (-0.5 * beta)
        U = sfft.ifftn(coef, axes=axes).real
        loc = rng.random(b) < 0.5
        if loc.any():
            cen = c0[:, None] + rng.uniform(-R, R, size=(grid.n, b))
            width = np.exp(rng.uniform(math.log(2 * grid.h), math.log(2 * R), b))
            env = np.zeros(grid.shape + (b,))
            for a, xa in enumerate(r_all):
                env = env + (xa[..., None] - cen[a]) ** 2
            env = np.exp(-env / width**2)
            U = np.where(loc, U * env, U)
        Uh = sfft.fftn(U, axes=axes)
        P2 = np.abs(Uh) ** 2
        norm2 = np.sum(U * U, axis=axes)
        Aform = np.sum(A[..., None] * P2, axis=axes) / grid.size
        Q = np.sum(q[..., None] * U * U, axis=axes)
        ratio = (Q - c * norm2) / (Aform + sigma * norm2)
        best = max(best, float(np.max(ratio)))
        done += b
    return InequalityReport(delta=delta, R=R, c=c, eps_min=best if best > 0 else 0.0, method="form-sampling",
                            sigma=sigma, details={"sampled_max": best, "trials": trials, "seed": seed})


# ---------------------------------------------------------------- M-splitting


def sphere_area(d: int) -> float:
    """Surface measure of the unit sphere in R^d (2 for d = 1)."""
    return 2.0 * math.pi ** (d / 2) / math.gamma(d / 2)


def sharp_sobolev_constant(d: int, s: float) -> float:
    """Best ``S`` in ``||u||^2_{2d/(d-2s)} <= S <u, (-lap)^s u>``, valid for ``0 < s < d/2``."""
    if not 0 < s < d / 2:
        raise InvalidParameter(f"sharp Sobolev constant needs 0 < s < d/2, got d={d}, s={s}")
    return float(2.0 ** (-2 * s) * math.pi ** (-s) * gamma((d - 2 * s) / 2) / gamma((d + 2 * s) / 2)
                 * (gamma(d) / gamma(d / 2)) ** (2 * s / d))


def embedding_constant(d: int, s: float) -> float:
    """``C`` in ``||u||_inf^2 <= C (<u, (-lap)^s u> + ||u||^2)``, valid for ``s > d/2``.

    Equals ``(2 pi)^{-d} int dk / (1 + |k|^{2s})``.
    """
    if not s > d / 2:
        raise InvalidParameter(f"sup-norm embedding needs s > d/2, got d={d}, s={s}")
    return float((2 * math.pi) ** (-d) * sphere_area(d) * math.pi / (2 * s * math.sin(math.pi * d / (2 * s))))


def _cap_radii(spec: PotentialSpec) -> list:
    if spec.kind == "sum":
        return [r for t in spec.params["terms"] for r in _cap_radii(t)]
    if spec.kind == "power-singular" and spec.params.get("cap") and spec.params["alpha"] > 0:
        return [spec.params["cap"] ** (-1.0 / spec.params["alpha"])]
    return []


def _radial_tail(spec: PotentialSpec, d: int, R: float, M: float, q: float, rho: float) -> float:
    """``int_{B_R} (|v|^q 1_{|v| > M})^rho dx`` for a radial spec.

    Integrated in ``log r`` between the level crossings of ``|v| = M``; below
    ``r0`` (under every cap kink) a power-law remainder is added in closed form.
    """
    def absv(r):
        return np.abs(spec.radial_profile(r))

    def integrand(r):
        return float(absv(r) ** (q * rho) * r ** (d - 1))

    kinks = sorted(x for x in _cap_radii(spec) if 0 < x < R)
    r0 = min([1e-10 * R] + [1e-3 * x for x in kinks])
    rs = np.unique(np.concatenate([np.geomspace(r0, R, 4000), np.linspace(r0, R, 4000)]))
    above = absv(rs) > M
    cuts = [0.0]
    for i in np.nonzero(above[1:] != above[:-1])[0]:
        cuts.append(brentq(lambda r: float(absv(r)) - M, rs[i], rs[i + 1], xtol=1e-15 * rs[i + 1]))
    cuts.append(R)
    total = 0.0
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        mid = math.sqrt(max(lo, r0) * hi)
        if not absv(np.array([mid]))[0] > M:
            continue
        if lo == 0.0:
            f1, f0 = integrand(r0), integrand(0.1 * r0)
            if f1 > 0:
                beta = math.log(f1 / f0) / math.log(10.0)
                if beta <= -1.0 + 1e-9:
                    raise IntegrabilityError(f"|v|^{q * rho:g} r^{d - 1} ~ r^{beta:.3f} is not integrable at 0")
                total += f1 * r0 / (beta + 1.0)
            lo = r0
        pts = [math.log(x) for x in kinks if lo < x < hi]
        val, _ = quad(lambda t: integrand(math.exp(t)) * math.exp(t), math.log(lo), math.log(hi),
                      points=pts or None, limit=400, epsabs=0.0, epsrel=1e-12)
        total += val
    total *= sphere_area(d)
    if not math.isfinite(total):
        raise IntegrabilityError("tail integral is not finite")
    return total


def _grid_tail(spec: PotentialSpec, d: int, R: float, M: float, q: float, rho: float, cells: int) -> float:
    from ..hamiltonian import eval_potential_spec

    h = 2 * R / cells
    x = -R + (np.arange(cells) + 0.5) * h
    mesh = np.meshgrid(*([x] * d), indexing="ij")
    pts = np.stack(mesh, axis=-1)
    r = np.sqrt(np.sum(pts**2, axis=-1))
    v = np.abs(eval_potential_spec(spec, pts))
    f = np.where((r <= R) & (v > M), v ** (q * rho), 0.0)
    return float(np.sum(f) * h**d)


def sobolev_split_bound(v: PotentialSpec, p: float, d: int, s: float, R: float, M: float,
                        q: float = 1.0) -> InequalityReport:
    """``(eps, c)`` with ``|v|^q 1_{B_R} <= eps (-lap)^s + c`` from splitting ``v`` at level ``M``.

    For ``d >= 3`` the tail ``|v|^q 1_{|v| > M}`` is measured in ``L^{d/(2s)}(B_R)``
    and multiplied by the sharp fractional Sobolev constant; ``c = M^q``.
    For ``d <= 2`` the tail is measured in ``L^1(B_R)`` and multiplied by the
    sup-norm embedding constant of ``H^s``; then ``c = M^q`` and the embedding
    adds ``c_extra = eps`` to the constant.
    """
    if M < 0 or R <= 0 or q <= 0:
        raise InvalidParameter("need M >= 0, R > 0 and q > 0")
    if d >= 3:
        if not 0 < s < d / 2:
            raise InvalidParameter(f"for d >= 3 need 0 < s < d/2, got s={s}")
        rho = d / (2 * s)
        if q * rho > p:
            raise InvalidParameter(f"|v|^{q} must lie in L^(d/2s): need q*d/(2s) = {q * rho:g} <= p = {p:g}")
        const, label = sharp_sobolev_constant(d, s), "sharp-fractional-sobolev"
    else:
        if not s > d / 2:
            raise InvalidParameter(f"for d <= 2 the sup-norm route needs s > d/2, got s={s}")
        rho = 1.0
        if q > p:
            raise InvalidParameter(f"|v|^{q} must lie in L^1: need q <= p = {p:g}")
        const, label = embedding_constant(d, s), "sup-embedding"
    if v.is_radial:
        I = _radial_tail(v, d, R, M, q, rho)
        check = None
    else:
        cells = {1: 2**16, 2: 1024}.get(d, 128)
        I = _grid_tail(v, d, R, M, q, rho, cells)
        check = _grid_tail(v, d, R, M, q, rho, cells // 2)
        if not (math.isfinite(I) and math.isfinite(check)):
            raise IntegrabilityError("tail integral is not finite on the refinement sweep")
    norm = I ** (1.0 / rho) if I > 0 else 0.0
    eps = const * norm
    return InequalityReport(
        delta=None, R=R, c=M**q, eps_min=eps, method="sobolev-split", M=M, constant=const,
        constant_label=label, c_extra=eps if d <= 2 else 0.0,
        details={"tail_integral": I, "tail_norm": norm, "p": p, "q": q, "d": d, "s": s,
                 "half_resolution_tail": check},
    )


# ---------------------------------------------------------------- square-root monotonicity


class SqrtMonotoneResult(NamedTuple):
    violations: int
    min_gap: float
    c_prime: float
    tail_decreasing: bool


def psd_sqrt(A: np.ndarray) -> np.ndarray:
    w, U = sla.eigh(0.5 * (A + A.conj().T))
    return (U * np.sqrt(np.clip(w, 0.0, None))) @ U.conj().T


def sqrt_gap(A: np.ndarray, B: np.ndarray) -> float:
    """Smallest eigenvalue of ``sqrt(B) - sqrt(A)``."""
    D = psd_sqrt(B) - psd_sqrt(A)
    return float(sla.eigvalsh(0.5 * (D + D.conj().T))[0])


def scalar_sqrt_constant(eps: float, delta: float, c: float, t_max: float = 1e4):
    """``c' = max_t sqrt(eps t^p + c) - eps^{2/3} t`` on a dense grid of ``[0, t_max]``, ``p = 3/2 - 2 delta``.

    Also returns whether the difference is decreasing at ``t_max``.
    """
    p = _form_exponent(delta)
    t = np.unique(np.concatenate([np.linspace(0.0, t_max, 200_001), np.geomspace(1e-8, t_max, 20_001)]))
    f = np.sqrt(eps * t**p + c) - eps ** (2.0 / 3.0) * t
    slope = 0.5 * eps * p * t_max ** (p - 1) / math.sqrt(eps * t_max**p + c) - eps ** (2.0 / 3.0)
    return float(f.max()), bool(slope < 0)


def sqrt_monotone_check(trials: int, dim: int, seed: int, eps: float = 0.1, delta: float = 0.1,
                        c: float = 1.0, tol: float = 1e-10) -> SqrtMonotoneResult:
    """Random pairs ``A <= B`` (``B = A + PSD`` of random rank) and the gap of their square roots."""
    if dim > 64 or dim < 1 or trials < 1:
        raise InvalidParameter("need 1 <= dim <= 64 and trials >= 1")
    rng = np.random.default_rng(seed)
    worst, bad = math.inf, 0
    for _ in range(trials):
        G = rng.standard_normal((dim, dim))
        A = G @ G.T / dim
        rank = int(rng.integers(1, dim + 1))
        Hm = rng.standard_normal((dim, rank))
        B = A + Hm @ Hm.T / dim
        g = sqrt_gap(A, B)
        worst = min(worst, g)
        bad += g < -tol
    cp, dec = scalar_sqrt_constant(eps, delta, c)
    return SqrtMonotoneResult(bad, worst, cp, dec)


# ---------------------------------------------------------------- N-body propagation


@dataclass
class PropagationReport:
    N: int
    R: float
    delta: float
    c: float
    eps_v: float
    eps_w: float
    eps_particle: float
    eps_direct: float
    factor: float
    bound: float
    c_total: float
    holds: bool
    sigma_particle: float
    sigma_direct: float

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["report"] = "constant-propagation"
        return d


def constant_propagation_check(v: PotentialSpec, w: PotentialSpec, R: float, delta: float, c: float,
                               m: int = 64, L: Optional[float] = None, N: int = 2, slack: float = 1e-8,
                               seed: int = 0) -> PropagationReport:
    """Compare the direct pencil value of the assembled ``V`` with the per-particle chain bound (``d = 1``).

    Per particle, ``|v|^2`` is bounded on ``B_R`` and ``|w|^2`` on ``B_2R``; with
    ``eps_1`` the larger of the two, the chain predicts that the assembled form
    satisfies the inequality with ``N(N+1)^2/4 * eps_1`` and constant
    ``N(N+1)^2/4 * N * c``. The direct value uses that constant.
    """
    L = 4.0 * R if L is None else L
    g1 = make_grid(1, 1, m, L)
    gN = make_grid(1, N, m, L)
    pv = assemble_total_potential(v, None, g1)
    pw = assemble_total_potential(w, None, g1)
    ev = min_eps_form_inequality(pv, R, delta, c, seed=seed)
    ew = min_eps_form_inequality(pw, 2 * R, delta, c, seed=seed)
    eps1 = max(ev.eps_min, ew.eps_min)
    K = N * (N + 1) ** 2 / 4.0
    c_tot = K * N * c
    direct = min_eps_form_inequality(assemble_total_potential(v, w, gN), R, delta, c_tot, seed=seed)
    bound = K * eps1
    return PropagationReport(
        N=N, R=R, delta=delta, c=c, eps_v=ev.eps_min, eps_w=ew.eps_min, eps_particle=eps1,
        eps_direct=direct.eps_min, factor=K, bound=bound, c_total=c_tot,
        holds=bool(direct.eps_min <= bound + slack), sigma_particle=ev.sigma, sigma_direct=direct.sigma,
    )
