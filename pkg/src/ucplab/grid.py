"""Tensor-product grids on boxes [-L, L]^n and the fields that live on them."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import _kernels
from .errors import BudgetExceeded, GeometryError, InvalidParameter, ReportIOError

DEFAULT_MAX_POINTS = 2**24
BOUNDARIES = ("periodic", "dirichlet-box")


def _exact_spacing(L: float, m: int) -> float:
    # nudge h by a few ulps until m*h reproduces 2L bit for bit
    target = 2.0 * L
    h = target / m
    cand = h
    for _ in range(8):
        if cand * m == target:
            return cand
        cand = math.nextafter(cand, math.inf if cand * m < target else -math.inf)
    raise InvalidParameter(f"no float spacing h with m*h == 2L exactly (m={m}, L={L!r})")


@dataclass(frozen=True)
class Grid:
    """Uniform grid with ``m`` nodes per axis on ``[-L, L]^n``, ``n = d*N``.

    Particle ``i`` owns axes ``i*d .. (i+1)*d - 1``. Periodic grids use nodes
    ``-L + j*h`` (so the origin is a node); Dirichlet boxes use cell centres
    ``-L + (j + 1/2)*h`` with the boundary values zero.
    """

    d: int
    N: int
    m: int
    L: float
    boundary: str = "periodic"
    max_points: int = DEFAULT_MAX_POINTS

    def __post_init__(self):
        for name in ("d", "N", "m"):
            val = getattr(self, name)
            if isinstance(val, bool) or not isinstance(val, (int, np.integer)) or val < 1:
                raise InvalidParameter(f"grid.{name} must be a positive integer, got {val!r}")
        if not (isinstance(self.L, (int, float, np.floating)) and math.isfinite(self.L) and self.L > 0):
            raise InvalidParameter(f"grid.L must be a finite positive number, got {self.L!r}")
        object.__setattr__(self, "L", float(self.L))
        if self.boundary not in BOUNDARIES:
            raise InvalidParameter(f"grid.boundary must be one of {BOUNDARIES}, got {self.boundary!r}")
        n = self.d * self.N
        if float(self.m) ** n > self.max_points:
            raise BudgetExceeded(
                f"grid has {self.m}^{n} = {float(self.m) ** n:.3g} points, budget is {self.max_points}"
            )
        if n > 4:
            raise InvalidParameter(f"total dimension n = d*N = {n} exceeds 4")
        if self.m < 8:
            raise InvalidParameter(f"grid.m must be >= 8, got {self.m}")
        if self.boundary == "periodic" and self.m & (self.m - 1):
            raise InvalidParameter(f"grid.m must be a power of two for periodic grids, got {self.m}")
        object.__setattr__(self, "_h", _exact_spacing(self.L, self.m))

    @property
    def n(self) -> int:
        return self.d * self.N

    @property
    def h(self) -> float:
        return self._h

    @property
    def periodic(self) -> bool:
        return self.boundary == "periodic"

    @property
    def shape(self) -> tuple:
        return (self.m,) * self.n

    @property
    def size(self) -> int:
        return self.m**self.n

    @property
    def cell_volume(self) -> float:
        return self.h**self.n

    def axis(self) -> np.ndarray:
        j = np.arange(self.m, dtype=np.float64)
        if self.periodic:
            return -self.L + j * self.h
        return -self.L + (j + 0.5) * self.h

    def coords(self) -> list:
        """Sparse (broadcastable) coordinate arrays, one per axis."""
        x = self.axis()
        out = []
        for a in range(self.n):
            shp = [1] * self.n
            shp[a] = self.m
            out.append(x.reshape(shp))
        return out

    def particle_axes(self, i: int) -> tuple:
        return tuple(range(i * self.d, (i + 1) * self.d))

    def one_particle(self) -> "Grid":
        return Grid(self.d, 1, self.m, self.L, self.boundary, self.max_points)

    def radius(self, center=None) -> np.ndarray:
        """Dense array of ``|x - center|`` over the grid."""
        c = _as_center(self, center)
        r2 = np.zeros(self.shape)
        for a, xa in enumerate(self.coords()):
            r2 = r2 + (xa - c[a]) ** 2
        return np.sqrt(r2)

    def points(self) -> np.ndarray:
        """Dense ``shape + (n,)`` array of node coordinates."""
        return np.stack(np.meshgrid(*([self.axis()] * self.n), indexing="ij"), axis=-1)

    def describe(self) -> dict:
        return {"n": self.n, "d": self.d, "N": self.N, "m": self.m, "L": self.L, "boundary": self.boundary}


def make_grid(d: int, N: int, m: int, L: float, boundary: str = "periodic",
              max_points: int = DEFAULT_MAX_POINTS) -> Grid:
    return Grid(d, N, m, L, boundary, max_points)


def _as_center(grid: Grid, center) -> np.ndarray:
    if center is None:
        return np.zeros(grid.n)
    c = np.atleast_1d(np.asarray(center, dtype=np.float64))
    if c.size == 1 and grid.n > 1:
        c = np.full(grid.n, float(c[0]))
    if c.shape != (grid.n,):
        raise InvalidParameter(f"center must have {grid.n} coordinates, got {c.shape}")
    return c


class GridFunction:
    """Immutable complex (or real) field on a :class:`Grid`.

    Values are stored read-only. Real input stays real; complex fields are
    accepted as-is.
    """

    __slots__ = ("grid", "values")

    def __init__(self, grid: Grid, values):
        v = np.array(values, copy=True)
        if v.dtype.kind not in "fc":
            v = v.astype(np.float64)
        elif v.dtype.kind == "f" and v.dtype != np.float64:
            v = v.astype(np.float64)
        elif v.dtype.kind == "c" and v.dtype != np.complex128:
            v = v.astype(np.complex128)
        if v.size == grid.size and v.shape != grid.shape:
            v = v.reshape(grid.shape)
        if v.shape != grid.shape:
            raise InvalidParameter(f"values shape {v.shape} does not match grid shape {grid.shape}")
        if not np.all(np.isfinite(v)):
            raise InvalidParameter("grid function values must be finite")
        v.flags.writeable = False
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", v)

    def __setattr__(self, name, value):
        raise AttributeError("GridFunction is immutable")

    def __repr__(self):
        return f"GridFunction(n={self.grid.n}, m={self.grid.m}, dtype={self.values.dtype})"

    @classmethod
    def from_callable(cls, grid: Grid, fn) -> "GridFunction":
        return cls(grid, np.broadcast_to(fn(*grid.coords()), grid.shape))

    @classmethod
    def zeros(cls, grid: Grid) -> "GridFunction":
        return cls(grid, np.zeros(grid.shape))

    @property
    def is_real(self) -> bool:
        return self.values.dtype.kind == "f"

    def with_values(self, values) -> "GridFunction":
        return GridFunction(self.grid, values)

    def abs2(self) -> np.ndarray:
        v = self.values
        return v.real**2 + v.imag**2 if v.dtype.kind == "c" else v * v

    def norm(self) -> float:
        """Discrete L2 norm ``h^{n/2} * ||values||_2``."""
        return float(self.grid.h ** (0.5 * self.grid.n) * np.linalg.norm(self.values.ravel()))

    def inner(self, other: "GridFunction") -> complex:
        """``<self, other>`` conjugate-linear in the first slot."""
        return complex(self.grid.cell_volume * np.vdot(self.values.ravel(), other.values.ravel()))

    def normalized(self) -> "GridFunction":
        nrm = self.norm()
        if nrm == 0.0:
            raise InvalidParameter("cannot normalise the zero function")
        return GridFunction(self.grid, self.values / nrm)


# ---------------------------------------------------------------- cutoffs


def bump_profile(t):
    """``exp(1 - 1/(1 - t^2))`` on ``|t| < 1``, zero outside; equals 1 at t = 0."""
    t = np.asarray(t, dtype=np.float64)
    out = np.zeros_like(t)
    inside = np.abs(t) < 1.0
    ti = t[inside]
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - ti * ti))
    return out


def _bump_derivatives(t):
    # first and second t-derivatives of bump_profile
    t = np.asarray(t, dtype=np.float64)
    b = bump_profile(t)
    d1 = np.zeros_like(t)
    d2 = np.zeros_like(t)
    inside = np.abs(t) < 1.0
    ti = t[inside]
    q = 1.0 - ti * ti
    d1[inside] = b[inside] * (-2.0 * ti / q**2)
    d2[inside] = b[inside] * (4.0 * ti**2 / q**4 - 2.0 / q**2 - 8.0 * ti**2 / q**3)
    return b, d1, d2


def smooth_step(r, r_in: float, r_out: float):
    """Radial cutoff: 1 for r <= r_in, 0 for r >= r_out, bump-shaped in between.

    Returns ``(eta, deta_dr, d2eta_dr2)``.
    """
    r = np.asarray(r, dtype=np.float64)
    w = r_out - r_in
    t = (r - r_in) / w
    b, d1, d2 = _bump_derivatives(np.clip(t, 0.0, None))
    eta = np.where(t <= 0.0, 1.0, b)
    d1 = np.where(t <= 0.0, 0.0, d1 / w)
    d2 = np.where(t <= 0.0, 0.0, d2 / w**2)
    return eta, d1, d2


class CutoffConstants(NamedTuple):
    grad: float
    lap: float


def _check_ball(grid: Grid, center, radius):
    c = _as_center(grid, center)
    lo, hi = -grid.L, grid.L
    if np.any(c - radius < lo) or np.any(c + radius > hi):
        raise GeometryError(f"ball of radius {radius} around {c.tolist()} leaves the box [-{grid.L}, {grid.L}]")
    return c


def cutoff_eta(grid: Grid, eps: float, center=None) -> GridFunction:
    """Smooth radial cutoff equal to 1 on B_eps(center) and 0 outside B_2eps(center)."""
    if not (eps > 0 and eps <= grid.L / 4):
        raise InvalidParameter(f"eps must lie in (0, L/4], got {eps}")
    _check_ball(grid, center, 2 * eps)
    eta, _, _ = smooth_step(grid.radius(center), eps, 2 * eps)
    return GridFunction(grid, eta)


def cutoff_constants(grid: Grid, eps: float, center=None) -> CutoffConstants:
    """Scale-free derivative bounds of :func:`cutoff_eta` on the grid nodes.

    ``grad = eps * sup|grad eta|`` and ``lap = eps**2 * sup|lap eta|``, both from
    the closed-form radial derivatives.
    """
    _check_ball(grid, center, 2 * eps)
    r = grid.radius(center)
    _, d1, d2 = smooth_step(r, eps, 2 * eps)
    n = grid.n
    with np.errstate(divide="ignore", invalid="ignore"):
        lap = d2 + np.where(r > 0, (n - 1) * d1 / r, 0.0)
    return CutoffConstants(float(np.max(np.abs(d1))) * eps, float(np.max(np.abs(lap))) * eps**2)


# ---------------------------------------------------------------- weighted norms


class BallQuadrature(NamedTuple):
    value: float
    n_points: int
    n_dropped: int


def weighted_ball_norm(psi: GridFunction, tau: float, radius: float, center=None) -> BallQuadrature:
    """Midpoint quadrature of ``|x - c|^{-tau} |psi|^2`` over the discrete ball.

    For ``tau > 0`` nodes closer than ``h/2`` to the centre are excluded; their
    count is returned as ``n_dropped``.
    """
    grid = psi.grid
    if tau < 0:
        raise InvalidParameter(f"tau must be >= 0, got {tau}")
    if radius > grid.L * (1 + 1e-15):
        raise InvalidParameter(f"radius {radius} exceeds the half-width {grid.L}")
    r = grid.radius(center)
    total, used, dropped = _kernels.ball_weighted_sum(psi.abs2(), r, radius, tau, 0.5 * grid.h)
    return BallQuadrature(grid.cell_volume * total, used, dropped)


# ---------------------------------------------------------------- serialization


def save_gridfunction(gf: GridFunction, path) -> tuple:
    """Write ``<path>.bin`` (little-endian float64 re/im pairs, C order) and ``<path>.json``."""
    path = Path(path)
    data = np.empty(gf.grid.size * 2, dtype="<f8")
    v = gf.values.ravel(order="C")
    data[0::2] = v.real
    data[1::2] = v.imag if v.dtype.kind == "c" else 0.0
    bin_path = path.with_suffix(".bin")
    meta_path = path.with_suffix(".json")
    try:
        bin_path.write_bytes(data.tobytes())
        meta_path.write_text(json.dumps(gf.grid.describe(), sort_keys=True) + "\n")
    except OSError as exc:
        raise ReportIOError(f"cannot write grid function to {bin_path}: {exc}") from exc
    return bin_path, meta_path


def load_gridfunction(path) -> GridFunction:
    path = Path(path)
    try:
        meta = json.loads(path.with_suffix(".json").read_text())
        raw = np.frombuffer(path.with_suffix(".bin").read_bytes(), dtype="<f8")
    except OSError as exc:
        raise ReportIOError(f"cannot read grid function {path}: {exc}") from exc
    grid = Grid(meta["d"], meta["N"], meta["m"], meta["L"], meta["boundary"])
    if raw.size != 2 * grid.size:
        raise ReportIOError(f"{path}: expected {2 * grid.size} floats, found {raw.size}")
    vals = raw[0::2] + 1j * raw[1::2]
    if not np.any(raw[1::2]):
        vals = vals.real
    return GridFunction(grid, vals.reshape(grid.shape))
