"""Carleman ratio evaluation, shell-bump test families and the derived epsilon constants."""

from __future__ import annotations

import functools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np
import scipy.fft as sfft
from scipy.optimize import brentq

from ..errors import DegenerateInput, DynamicRangeError, GeometryError, InvalidParameter
from ..grid import Grid, GridFunction, make_grid
from ..operators import neg_laplacian
from .weight import CRITICAL_RADIUS, phi_radial

DYNAMIC_RANGE = 1e12
DEFAULT_TAUS = tuple(8.0 * 2.0 ** (j / 2) for j in range(11))  # 8 .. 256


@dataclass(frozen=True)
class ShellBump:
    """``B((r - rc)/hw) * (r/b)^tilt * Y_ell`` supported on ``a <= r <= b``.

    ``B`` is the bump ``exp(1 - 1/(1 - t^2))``. ``Y_ell`` is ``cos(ell*theta)`` in
    the first coordinate plane (n >= 2) or the parity factor ``sign(x)^ell`` in
    one dimension.
    """

    a: float
    b: float
    tilt: float = 0.0
    ell: int = 0

    def __post_init__(self):
        if not (0.0 < self.a < self.b < 1.0):
            raise GeometryError(f"shell needs 0 < a < b < 1, got a={self.a}, b={self.b}")
        if self.ell < 0:
            raise InvalidParameter("ell must be >= 0")

    @property
    def function_id(self) -> str:
        return f"shell(a={self.a:.6g},b={self.b:.6g},tilt={self.tilt:g},ell={self.ell})"

    def radial(self, r: np.ndarray, n: int):
        """``(f, lap f_ell)`` for the radial factor, with the angular term folded in."""
        hw = 0.5 * (self.b - self.a)
        rc = 0.5 * (self.a + self.b)
        t = (r - rc) / hw
        q = 1.0 - t * t
        B = np.exp(1.0 - 1.0 / q)
        B1 = B * (-2.0 * t / q**2) / hw
        B2 = B * (4.0 * t**2 / q**4 - 2.0 / q**2 - 8.0 * t**2 / q**3) / hw**2
        g = self.tilt
        P = (r / self.b) ** g
        P1 = g * P / r
        P2 = g * (g - 1.0) * P / r**2
        f = B * P
        f1 = B1 * P + B * P1
        f2 = B2 * P + 2.0 * B1 * P1 + B * P2
        lap = f2 + (n - 1) * f1 / r - self.ell * (self.ell + n - 2) * f / r**2
        return f, lap

    def angular(self, grid: Grid, mask: np.ndarray) -> np.ndarray:
        if self.ell == 0:
            return np.ones(int(mask.sum()))
        x = grid.coords()
        if grid.n == 1:
            if self.ell > 1:
                raise InvalidParameter("in one dimension only ell in {0, 1} (parity) is available")
            return np.sign(np.broadcast_to(x[0], grid.shape)[mask])
        z = np.broadcast_to(x[0], grid.shape)[mask] + 1j * np.broadcast_to(x[1], grid.shape)[mask]
        return np.real((z / np.abs(z)) ** self.ell)

    def evaluate(self, grid: Grid):
        """``(u, lap_u)`` as full-grid arrays (closed-form Laplacian)."""
        r = grid.radius()
        mask = (r > self.a) & (r < self.b)
        u = np.zeros(grid.shape)
        lu = np.zeros(grid.shape)
        f, lap = self.radial(r[mask], grid.n)
        y = self.angular(grid, mask)
        u[mask] = f * y
        lu[mask] = lap * y
        return u, lu


def shell_for(center: float, dphi: float, r_max: float = 0.45) -> Optional[tuple]:
    """Annulus ``(a, b)`` around ``center`` spanning ``dphi/2`` of weight on each side.

    Returns None when the outer radius would pass ``r_max`` (the weight stops
    being monotone at its critical radius, about 0.533).
    """
    r_max = min(r_max, CRITICAL_RADIUS)
    pc = float(phi_radial(center))
    try:
        a = brentq(lambda x: float(phi_radial(x)) - pc - 0.5 * dphi, 1e-12, center * (1 - 1e-12))
        b = brentq(lambda x: pc - float(phi_radial(x)) - 0.5 * dphi, center * (1 + 1e-12), r_max)
    except ValueError:
        return None
    return a, b


def default_shell_family(n: int, centers=None, dphis=(0.1, 0.2, 0.4, 0.8), tilts=None, ells=None) -> list:
    """Shell bumps over centres, weight spans, radial tilts and angular degrees.

    Tilts larger than the largest admissible ``tau`` for a member's weight span
    are left out: such members are never evaluated.
    """
    centers = np.geomspace(0.08, 0.3, 5) if centers is None else centers
    tilts = (0.0,) + DEFAULT_TAUS[::2] if tilts is None else tilts
    if ells is None:
        ells = (0,) if n == 1 else (0, 1, 2)
    fam = []
    for c in centers:
        for dp in dphis:
            ab = shell_for(float(c), dp)
            if ab is None:
                continue
            tau_cap = math.log(DYNAMIC_RANGE) / dp
            for g in tilts:
                if g > tau_cap:
                    continue
                for ell in ells:
                    fam.append(ShellBump(ab[0], ab[1], float(g), int(ell)))
    return fam


def default_family_grid(n: int, padded: bool = False) -> Grid:
    """Grid for family sweeps: unpadded ``L = 0.5`` suffices when only local norms enter."""
    if padded:
        # 2D: L = 1 keeps h small enough that moderate tau stays band-limited
        m, L = {1: (2**15, 2.0), 2: (1024, 1.0)}.get(n, (64, 2.0))
        return make_grid(n, 1, m, L)
    return make_grid(n, 1, {1: 2**15, 2: 1024}.get(n, 96 if n == 3 else 32), 0.5)


class _Support:
    __slots__ = ("mask", "u", "lap", "phi", "span")

    def __init__(self, u, lap_u, grid):
        mask = u != 0
        if not np.any(mask):
            raise DegenerateInput("u vanishes identically; the ratio is 0/0")
        r = grid.radius()[mask]
        if r.min() <= 0.0 or r.max() >= 1.0:
            raise GeometryError(f"support of u must lie in an annulus inside the punctured unit ball, "
                                f"found radii [{r.min():.3g}, {r.max():.3g}]")
        self.mask = mask
        self.u = u[mask]
        self.lap = lap_u[mask]
        self.phi = phi_radial(r)
        self.span = float(self.phi.max() - self.phi.min())


@functools.lru_cache(maxsize=8)
def _spectral_tables(grid: Grid, power: float, full: bool):
    """Symbol, outer-band mask and Hermitian multiplicity weights in (r)fft layout."""
    k = np.fft.fftfreq(grid.m, 1.0 / grid.m)
    kr = k if full else np.fft.rfftfreq(grid.m, 1.0 / grid.m)
    scale = np.pi / grid.L
    shape = (grid.m,) * (grid.n - 1) + (kr.size,)
    k2 = np.zeros(shape)
    outer = np.zeros(shape, dtype=bool)
    for a in range(grid.n):
        ka = kr if a == grid.n - 1 else k
        shp = [1] * grid.n
        shp[a] = ka.size
        k2 = k2 + (scale * ka.reshape(shp)) ** 2
        outer = outer | (np.abs(ka) > grid.m // 4).reshape(shp)
    sym = k2**power
    wts = np.ones(shape)
    if not full:
        # interior rfft bins stand for a conjugate pair
        last = np.full(kr.size, 2.0)
        last[0] = 1.0
        if grid.m % 2 == 0:
            last[-1] = 1.0
        wts = wts * last.reshape((1,) * (grid.n - 1) + (-1,))
    return sym, outer, wts


def _ratio_on_support(sup: _Support, grid: Grid, tau: float, s: float, xi: float,
                      resolution_tol: float = 1e-10):
    """``(ratio, resolved)``; ``resolved`` is False when the weighted field is not band-limited."""
    w = np.exp(tau * (sup.phi - sup.phi.max()))
    den = np.linalg.norm(w * sup.lap)
    if den == 0.0:
        raise DegenerateInput("e^{tau phi} lap u vanishes; the ratio is undefined")
    power = (1.0 - xi) * s
    if power == 0.0:
        num = np.linalg.norm(w * sup.u)
        return tau ** (1.5 - 2.0 * s) * num / den, True
    if not grid.periodic:
        raise InvalidParameter("fractional norms need a periodic grid")
    f = np.zeros(grid.shape, dtype=np.result_type(sup.u, np.float64))
    f[sup.mask] = w * sup.u
    sym, outer, wts = _spectral_tables(grid, power, np.iscomplexobj(f))
    axes = tuple(range(grid.n))
    fh = sfft.fftn(f, axes=axes) if np.iscomplexobj(f) else sfft.rfftn(f, axes=axes)
    e2 = np.abs(fh) ** 2 * wts
    num = np.sqrt(np.sum(e2 * sym**2) / grid.size)
    # spectral energy in the outer half band, relative
    resolved = bool(e2[outer].sum() <= resolution_tol * e2.sum())
    return tau ** (1.5 - 2.0 * s) * num / den, resolved


def carleman_ratio(u: GridFunction, tau: float, s: float, xi: float, lap_u=None,
                   dynamic_range: float = DYNAMIC_RANGE) -> float:
    """``tau^{3/2-2s} ||(-lap)^{(1-xi)s}(e^{tau phi} u)|| / ||e^{tau phi} lap u||_{B_1}``.

    Parameters
    ----------
    u : GridFunction
        Real or complex field supported in an annulus ``0 < a <= |x| <= b < 1``.
    lap_u : array or GridFunction, optional
        Laplacian of ``u``. Defaults to the spectral Laplacian (periodic grids).
    dynamic_range : float
        Largest allowed ratio ``max/min`` of ``e^{tau phi}`` over the support.

    Notes
    -----
    Both norms are scaled by ``exp(-tau * max phi)`` before evaluation, which
    leaves the ratio unchanged and keeps the exponentials finite.
    """
    if not (0.0 <= s <= 1.0) or xi <= 0.0 or tau <= 0.0:
        raise InvalidParameter("need s in [0, 1], xi > 0 and tau > 0")
    grid = u.grid
    vals = np.asarray(u.values)
    if lap_u is None:
        lap = -neg_laplacian(grid, "spectral").apply(vals)
    else:
        lap = np.asarray(lap_u.values if isinstance(lap_u, GridFunction) else lap_u)
    sup = _Support(vals, lap, grid)
    if tau * sup.span > math.log(dynamic_range):
        raise DynamicRangeError(f"e^(tau*phi) spans {tau * sup.span / math.log(10):.1f} decades over supp u "
                                f"(cap {math.log10(dynamic_range):.0f})")
    return float(_ratio_on_support(sup, grid, tau, s, xi)[0])


@dataclass
class CarlemanReport:
    s: float
    xi: float
    tau_list: list
    tau0: Optional[float]
    rows: list
    kappa_by_tau: list
    argmax_by_tau: list
    kappa_hat: float
    slope_log_kappa_vs_log_tau: float
    n_functions: int
    n_inadmissible: int
    n_unresolved: int
    delta: Optional[float] = None
    d: Optional[int] = None
    N: Optional[int] = None
    eps_main: Optional[float] = None
    eps_dN: Optional[float] = None
    eps_main_exact: Optional[str] = None
    eps_dN_exact: Optional[str] = None
    eps_identity_exact: Optional[bool] = None
    grid: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {k: v for k, v in self.__dict__.items() if k != "rows"}
        d["report"] = "carleman"
        return d

    def table(self):
        return ["tau", "s", "xi", "function_id", "ratio"], [list(r) for r in self.rows]

    def series(self):
        return {"kappa_vs_tau": (self.tau_list, self.kappa_by_tau)}


def _member_sweep(member: ShellBump, grid: Grid, taus, s, xi, dynamic_range):
    u, lu = member.evaluate(grid)
    sup = _Support(u, lu, grid)
    out = []
    for tau in taus:
        if tau * sup.span > math.log(dynamic_range):
            out.append((tau, None, "inadmissible"))
            continue
        val, resolved = _ratio_on_support(sup, grid, tau, s, xi)
        out.append((tau, float(val), "ok" if resolved else "unresolved"))
    return out


def _tau0(taus, kappa, factor=1.5):
    for j in range(len(taus)):
        tail = [k for k in kappa[j:] if np.isfinite(k)]
        if tail and max(tail) <= factor * min(tail):
            return float(taus[j])
    return None


def eps_constants(kappa_hat: float, N: int) -> dict:
    """Exact epsilon constants from a Carleman constant.

    ``eps_main = 1/(4 kappa^2)`` and ``eps_dN = 1/(N (N+1)^2 kappa^2)``, both
    computed in exact rational arithmetic from the binary value of ``kappa_hat``.
    """
    if not (kappa_hat > 0 and math.isfinite(kappa_hat)):
        raise InvalidParameter(f"kappa_hat must be positive and finite, got {kappa_hat}")
    if N < 1:
        raise InvalidParameter("N must be >= 1")
    k = Fraction(kappa_hat)
    eps_main = Fraction(1, 4) / (k * k)
    eps_dN = Fraction(1, N * (N + 1) ** 2) / (k * k)
    return {
        "eps_main": float(eps_main), "eps_dN": float(eps_dN),
        "eps_main_exact": str(eps_main), "eps_dN_exact": str(eps_dN),
        "eps_identity_exact": eps_dN * N * (N + 1) ** 2 == 4 * eps_main,
    }


def estimate_kappa_and_eps(family: Sequence[ShellBump], tau_range=DEFAULT_TAUS, s: float = 0.75,
                           xi: Optional[float] = None, delta: Optional[float] = None, d: int = 1, N: int = 1,
                           grid: Optional[Grid] = None, threads: int = 1,
                           dynamic_range: float = DYNAMIC_RANGE) -> CarlemanReport:
    """Sweep a test family over ``tau_range`` and derive ``kappa_hat`` and the epsilons.

    ``kappa_hat(tau)`` is the largest ratio among members admissible at ``tau``
    (weight span within ``dynamic_range`` and, for fractional norms, a resolved
    spectrum); ``kappa_hat`` is the maximum over all ``tau``. When ``xi`` is not
    given it is set to ``4*delta/3``.
    """
    if not family:
        raise InvalidParameter("the test family is empty")
    if xi is None:
        if delta is None:
            raise InvalidParameter("give xi or delta")
        xi = 4.0 * delta / 3.0
    n = d * N
    if grid is None:
        grid = default_family_grid(n, padded=(1.0 - xi) * s > 0)
    if grid.n != n:
        raise InvalidParameter(f"family grid has n = {grid.n}, expected d*N = {n}")
    taus = [float(t) for t in tau_range]

    def work(mem):
        return _member_sweep(mem, grid, taus, s, xi, dynamic_range)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            sweeps = list(ex.map(work, family))
    else:
        sweeps = [work(mem) for mem in family]

    rows, n_inadm, n_unres = [], 0, 0
    kappa = [-math.inf] * len(taus)
    arg = [None] * len(taus)
    for mem, sw in zip(family, sweeps):
        for j, (tau, val, status) in enumerate(sw):
            if status == "inadmissible":
                n_inadm += 1
                continue
            if status == "unresolved":
                n_unres += 1
                continue
            rows.append((tau, s, xi, mem.function_id, val))
            if val > kappa[j]:
                kappa[j], arg[j] = val, mem.function_id
    kap = np.array([k if k > -math.inf else np.nan for k in kappa])
    ok = np.isfinite(kap)
    if not ok.any():
        raise DynamicRangeError("no (function, tau) pair is admissible")
    slope = float(np.polyfit(np.log(np.array(taus)[ok]), np.log(kap[ok]), 1)[0]) if ok.sum() >= 2 else float("nan")
    khat = float(np.nanmax(kap))
    rep = CarlemanReport(
        s=s, xi=xi, tau_list=taus, tau0=_tau0(taus, kap), rows=rows,
        kappa_by_tau=[float(k) for k in kap], argmax_by_tau=arg, kappa_hat=khat,
        slope_log_kappa_vs_log_tau=slope, n_functions=len(family), n_inadmissible=n_inadm,
        n_unresolved=n_unres, delta=delta, d=d, N=N, grid=grid.describe(),
    )
    for key, val in eps_constants(khat, N).items():
        setattr(rep, key, val)
    return rep
