"""Unique-continuation diagnostics: vanishing order, weighted-norm identity, derivative bounds, zero sets."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from . import _kernels
from .errors import InvalidParameter
from .grid import GridFunction, _as_center, weighted_ball_norm
from .hamiltonian import AssembledPotential
from .operators import fd_gradient, neg_laplacian, spectral_gradient

DEFAULT_ORDER_THRESHOLD = 12.0
_ULP = np.finfo(np.float64).eps


def zero_set_fraction(psi: GridFunction, threshold: float) -> float:
    """Fraction of nodes with ``|psi| <= threshold * max|psi|``."""
    if threshold < 0:
        raise InvalidParameter("threshold must be >= 0")
    a = np.abs(psi.values)
    return float(np.mean(a <= threshold * a.max()))


def ball_masses(psi: GridFunction, radii, center=None) -> tuple:
    """``(masses, counts)`` of ``int_{B_r}|psi|^2`` for increasing radii."""
    radii = np.asarray(radii, dtype=np.float64)
    if np.any(np.diff(radii) <= 0):
        raise InvalidParameter("radii must be strictly increasing")
    grid = psi.grid
    r = grid.radius(center)
    masses = _kernels.ball_masses(psi.abs2(), r, radii) * grid.cell_volume
    counts = _kernels.ball_masses(np.ones(r.size), r, radii).astype(np.int64)
    return masses, counts


@dataclass
class VanishingReport:
    center: list
    eps_list: list
    masses: list
    counts: list
    used: list
    fitted_order: float
    c_k_estimates: dict
    zero_fraction: float
    threshold: float
    infinite_order: bool
    roundoff_floor: list = field(default_factory=list)

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["report"] = "vanishing"
        return d

    def table(self):
        return ["eps", "mass", "count"], [[e, m, c] for e, m, c in zip(self.eps_list, self.masses, self.counts)]


def vanishing_order_fit(psi: GridFunction, center=None, eps_list=None,
                        threshold: float = DEFAULT_ORDER_THRESHOLD, k_max: int = 16) -> VanishingReport:
    """Least-squares slope of ``log mass(eps)`` against ``log eps``.

    Only radii whose ball holds at least 10 nodes and whose mass exceeds 100x
    the roundoff floor ``count * h^n * (ulp * max|psi|)^2`` enter the fit. If
    fewer than two radii qualify while some mass sits at the floor, the order
    is reported as ``inf``.
    """
    grid = psi.grid
    eps = np.sort(np.asarray(eps_list, dtype=np.float64))
    if eps.size < 4:
        raise InvalidParameter("vanishing_order_fit needs at least 4 radii")
    if eps[0] <= 2 * grid.h or eps[-1] >= grid.L / 4:
        raise InvalidParameter(f"radii must lie in (2h, L/4) = ({2 * grid.h:g}, {grid.L / 4:g})")
    c = _as_center(grid, center)
    masses, counts = ball_masses(psi, eps, c)
    amax = float(np.abs(psi.values).max())
    floor = counts * grid.cell_volume * (_ULP * amax) ** 2
    used = (counts >= 10) & (masses > 100 * floor) & (masses > 0)
    if used.sum() >= 2:
        slope = float(np.polyfit(np.log(eps[used]), np.log(masses[used]), 1)[0])
    elif np.any(masses <= 100 * floor):
        # the mass drops below roundoff faster than any resolvable power
        slope = float("inf")
    else:
        slope = float("nan")
    ck = {k: float(np.max(masses / eps**k)) for k in range(k_max + 1)}
    return VanishingReport(
        center=c.tolist(), eps_list=eps.tolist(), masses=masses.tolist(), counts=counts.tolist(),
        used=used.tolist(), fitted_order=slope, c_k_estimates=ck,
        zero_fraction=zero_set_fraction(psi, 1e-12), threshold=threshold,
        infinite_order=bool(slope > threshold), roundoff_floor=floor.tolist(),
    )


class EquivalenceResult(NamedTuple):
    lhs: float
    rhs: float
    rel_gap: float
    lhs_half: float
    rel_gap_half: float
    n_dropped: int


def _rel_gap(a, b):
    if a == b:
        return 0.0
    if not (np.isfinite(a) and np.isfinite(b)):
        return float("inf")
    return abs(a - b) / max(abs(a), abs(b))


def cell_ball_masses(psi: GridFunction, radii, center=None) -> np.ndarray:
    """Ball masses with each node treated as a cell of radial width ``h``.

    A node at distance ``r_j`` contributes ``clip((eps - r_j)/h + 1/2, 0, 1)`` of
    its mass to ``M(eps)``, so ``M`` is continuous and piecewise linear in
    ``eps`` instead of a staircase. Quadratures in ``eps`` then converge at
    second order rather than with the random-walk error of a step function.
    """
    grid = psi.grid
    radii = np.asarray(radii, dtype=np.float64)
    r = grid.radius(center).ravel()
    order = np.argsort(r, kind="stable")
    rs = r[order]
    ws = psi.abs2().ravel()[order] * grid.cell_volume
    cw = np.concatenate([[0.0], np.cumsum(ws)])
    cr = np.concatenate([[0.0], np.cumsum(ws * rs)])
    h = grid.h
    lo = np.searchsorted(rs, radii - 0.5 * h, "left")
    hi = np.searchsorted(rs, radii + 0.5 * h, "left")
    return cw[lo] + (radii / h + 0.5) * (cw[hi] - cw[lo]) - (cr[hi] - cr[lo]) / h


def weighted_equivalence_identity(psi: GridFunction, k: int, center=None, n_eps: int = 1024,
                                  overflow_guard: float = 1e300) -> EquivalenceResult:
    """Both sides of ``int_0^1 eps^{-k} M(eps) d eps = (k-1)^{-1} int_{B_1}|psi|^2 (|x|^{1-k} - 1)``.

    ``M(eps)`` is the ball mass from :func:`cell_ball_masses`. The left side is
    an ``n_eps``-point midpoint rule in ``log eps`` on ``[h, 1]``; ``lhs_half``
    repeats it with ``n_eps/2`` points. The right side is the weighted node sum
    of :func:`weighted_ball_norm`, which drops the centre node (``|x| < h/2``).
    """
    if k < 2:
        raise InvalidParameter("k must be >= 2")
    if n_eps < 4:
        raise InvalidParameter("n_eps must be >= 4")
    grid = psi.grid
    if grid.L < 1.0:
        raise InvalidParameter("the unit ball must fit in the box (L >= 1)")

    def lhs_rule(npts):
        t = np.linspace(np.log(grid.h), 0.0, npts + 1)
        e = np.exp(0.5 * (t[1:] + t[:-1]))
        return float(np.sum(e ** (1 - k) * cell_ball_masses(psi, e, center)) * (t[1] - t[0]))

    lhs = lhs_rule(n_eps)
    lhs_half = lhs_rule(n_eps // 2)
    wq = weighted_ball_norm(psi, k - 1, 1.0, center)
    mass1 = weighted_ball_norm(psi, 0.0, 1.0, center).value
    rhs = (wq.value - mass1) / (k - 1)
    if not np.isfinite(rhs) or abs(rhs) > overflow_guard:
        rhs = float("inf")
    return EquivalenceResult(lhs, rhs, _rel_gap(lhs, rhs), lhs_half, _rel_gap(lhs_half, rhs), wq.n_dropped)


@dataclass
class DerivativeReport:
    eps: list
    mass: list
    ratio1: list
    ratio2: list
    ratio2_scaled: list
    variation1: float
    variation2: float
    bounded1: bool
    bounded2: bool
    bound_factor: float
    method: str
    equation_residual: Optional[list] = None

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["report"] = "derivative-vanishing"
        return d

    def table(self):
        return ["eps", "mass", "ratio1", "ratio2"], [list(r) for r in zip(self.eps, self.mass, self.ratio1, self.ratio2)]


def _variation(x):
    x = np.asarray(x, dtype=np.float64)
    x = x[np.isfinite(x) & (x > 0)]
    if x.size == 0:
        return float("nan")
    return float(x.max() / x.min())


def field_derivatives(psi: GridFunction, method: str = "auto"):
    """``(grad components, Laplacian)`` by spectral or centred-difference rules."""
    grid = psi.grid
    if method == "auto":
        method = "spectral" if grid.periodic else "fd"
    v = np.asarray(psi.values)
    grad = spectral_gradient(v, grid) if method == "spectral" else fd_gradient(v, grid)
    lap = -neg_laplacian(grid, method).apply(v)
    return grad, lap, method


def derivative_vanishing_check(psi: GridFunction, V: Optional[AssembledPotential] = None, center=None,
                               eps_list=None, method: str = "auto", bound_factor: float = 4.0) -> DerivativeReport:
    """Scale ratios behind the local derivative bounds.

    ``ratio1 = eps^2 int_{B_eps}|grad psi|^2 / int_{B_2eps}|psi|^2`` and
    ``ratio2 = eps^4 int_{B_eps}|lap psi|^2 / int_{B_2eps}(|psi|^2 + |grad psi|^2)``.
    ``ratio2_scaled`` replaces ``|grad psi|^2`` by ``eps^2 |grad psi|^2`` in the
    denominator, which makes it invariant under dilation; it is a diagnostic.
    A ratio is flagged bounded when its max/min over the sweep is below
    ``bound_factor``. With ``V`` given, the residual ``||(-lap + V) psi||`` on each
    ``B_eps`` is recorded.
    """
    grid = psi.grid
    eps = np.sort(np.asarray(eps_list, dtype=np.float64))
    if eps.size < 2:
        raise InvalidParameter("need at least two radii")
    c = _as_center(grid, center)
    grad, lap, method = field_derivatives(psi, method)
    g2 = sum(np.abs(g) ** 2 for g in grad)
    r = grid.radius(c)
    dv = grid.cell_volume
    p2 = psi.abs2()
    l2 = np.abs(lap) ** 2

    def ball(f, rad):
        return float(np.sum(f[r <= rad]) * dv)

    mass, r1, r2, r2s, res = [], [], [], [], []
    for e in eps:
        m2 = ball(p2, 2 * e)
        gg = ball(g2, e)
        g2e = ball(g2, 2 * e)
        ll = ball(l2, e)
        mass.append(ball(p2, e))
        r1.append(e**2 * gg / m2 if m2 > 0 else float("nan"))
        den = m2 + g2e
        r2.append(e**4 * ll / den if den > 0 else float("nan"))
        dens = m2 + e**2 * g2e
        r2s.append(e**4 * ll / dens if dens > 0 else float("nan"))
        if V is not None:
            eq = -lap + V.values.values * psi.values
            res.append(float(np.sqrt(ball(np.abs(eq) ** 2, e))))
    v1, v2 = _variation(r1), _variation(r2)
    return DerivativeReport(
        eps=eps.tolist(), mass=mass, ratio1=r1, ratio2=r2, ratio2_scaled=r2s,
        variation1=v1, variation2=v2, bounded1=bool(v1 < bound_factor), bounded2=bool(v2 < bound_factor),
        bound_factor=bound_factor, method=method, equation_residual=res if V is not None else None,
    )
