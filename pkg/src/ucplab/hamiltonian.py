"""Potential specifications and assembly of N-body Schroedinger operators."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .errors import InvalidParameter, ParityError, SingularEvaluationError
from .grid import Grid, GridFunction
from .operators import OperatorHandle, kinetic_nbody, multiply, operator_sum

_KINDS = {
    "harmonic": {"kappa": 1.0},
    "soft-coulomb": {"q": 1.0, "a": 1.0},
    "power-singular": {"alpha": None, "cap": None},
    "gaussian-well": {"depth": None, "width": None},
    "constant": {"c": None},
    "tabulated": {"nodes": None, "values": None},
    "sum": {"terms": None},
}
RADIAL_KINDS = ("harmonic", "soft-coulomb", "power-singular", "gaussian-well", "constant")


@dataclass(frozen=True, eq=False)
class PotentialSpec:
    """Symbolic potential.

    ``kind`` selects the formula; ``params`` holds its parameters:

    ========================  ==========================================
    harmonic(kappa)           ``kappa * |x|^2``
    soft-coulomb(q, a)        ``-q / sqrt(|x|^2 + a^2)``
    power-singular(alpha,cap) ``min(|x|^-alpha, cap)``
    gaussian-well(depth,width) ``-depth * exp(-|x|^2 / width^2)``
    constant(c)               ``c``
    tabulated(nodes, values)  multilinear interpolation, clamped at the ends
    sum(terms)                sum of the terms
    ========================  ==========================================
    """

    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise InvalidParameter(f"unknown potential kind {self.kind!r}; expected one of {sorted(_KINDS)}")
        allowed = _KINDS[self.kind]
        unknown = set(self.params) - set(allowed)
        if unknown:
            raise InvalidParameter(f"unknown parameter(s) {sorted(unknown)} for potential kind {self.kind!r}")
        full = {k: v for k, v in allowed.items() if v is not None}
        full.update(self.params)
        missing = [k for k in allowed if k not in full and not (self.kind == "power-singular" and k == "cap")]
        if missing:
            raise InvalidParameter(f"potential kind {self.kind!r} is missing parameter(s) {missing}")
        object.__setattr__(self, "params", full)
        self._validate()

    def _validate(self):
        p, k = self.params, self.kind
        if k == "sum":
            terms = tuple(t if isinstance(t, PotentialSpec) else PotentialSpec.from_dict(t) for t in p["terms"])
            p["terms"] = terms
            return
        if k == "tabulated":
            nodes = p["nodes"]
            if isinstance(nodes, np.ndarray) or (len(nodes) and np.isscalar(nodes[0])):
                nodes = (nodes,)
            nodes = tuple(np.asarray(a, dtype=np.float64) for a in nodes)
            vals = np.asarray(p["values"], dtype=np.float64)
            if vals.shape != tuple(a.size for a in nodes):
                raise InvalidParameter(f"tabulated values shape {vals.shape} does not match nodes")
            if not all(np.all(np.diff(a) > 0) for a in nodes):
                raise InvalidParameter("tabulated nodes must be strictly increasing")
            if not np.all(np.isfinite(vals)):
                raise InvalidParameter("tabulated values must be finite")
            p["nodes"], p["values"] = nodes, vals
            return
        for name, val in p.items():
            if val is None:
                continue
            if not isinstance(val, (int, float, np.floating, np.integer)) or not math.isfinite(val):
                raise InvalidParameter(f"potential parameter {k}.{name} must be a finite number, got {val!r}")
            p[name] = float(val)
        if k == "soft-coulomb" and p["a"] <= 0:
            raise InvalidParameter("soft-coulomb requires a > 0")
        if k == "gaussian-well" and p["width"] <= 0:
            raise InvalidParameter("gaussian-well requires width > 0")
        if k == "power-singular":
            if p["alpha"] < 0:
                raise InvalidParameter("power-singular requires alpha >= 0")
            if p.get("cap") is not None and p["cap"] <= 0:
                raise InvalidParameter("power-singular cap must be positive")

    # -- constructors
    @classmethod
    def harmonic(cls, kappa=1.0):
        return cls("harmonic", {"kappa": kappa})

    @classmethod
    def soft_coulomb(cls, q=1.0, a=1.0):
        return cls("soft-coulomb", {"q": q, "a": a})

    @classmethod
    def power_singular(cls, alpha, cap=None):
        return cls("power-singular", {"alpha": alpha, "cap": cap})

    @classmethod
    def gaussian_well(cls, depth, width):
        return cls("gaussian-well", {"depth": depth, "width": width})

    @classmethod
    def constant(cls, c):
        return cls("constant", {"c": c})

    @classmethod
    def zero(cls):
        return cls("constant", {"c": 0.0})

    @classmethod
    def tabulated(cls, nodes, values):
        return cls("tabulated", {"nodes": nodes, "values": values})

    @classmethod
    def sum_of(cls, *terms):
        return cls("sum", {"terms": terms})

    def __add__(self, other):
        if isinstance(other, (int, float)):
            other = PotentialSpec.constant(other)
        if not isinstance(other, PotentialSpec):
            return NotImplemented
        return PotentialSpec.sum_of(self, other)

    __radd__ = __add__

    @classmethod
    def from_dict(cls, d: dict) -> "PotentialSpec":
        """Build from the textual config form, e.g. ``{kind="harmonic", kappa=1.0}``."""
        if not isinstance(d, dict) or "kind" not in d:
            raise InvalidParameter(f"potential spec must be a table with a 'kind' key, got {d!r}")
        params = {k: v for k, v in d.items() if k != "kind"}
        if d["kind"] == "sum":
            params["terms"] = tuple(cls.from_dict(t) for t in params.get("terms", ()))
        return cls(d["kind"], params)

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        for k, v in self.params.items():
            if k == "terms":
                out[k] = [t.to_dict() for t in v]
            elif k == "nodes":
                out[k] = [a.tolist() for a in v] if len(v) > 1 else v[0].tolist()
            elif isinstance(v, np.ndarray):
                out[k] = v.tolist()
            elif v is not None:
                out[k] = v
        return out

    @property
    def is_radial(self) -> bool:
        if self.kind == "sum":
            return all(t.is_radial for t in self.params["terms"])
        return self.kind in RADIAL_KINDS

    @property
    def is_zero(self) -> bool:
        if self.kind == "constant":
            return self.params["c"] == 0.0
        if self.kind == "sum":
            return all(t.is_zero for t in self.params["terms"])
        return False

    def radial_profile(self, r):
        """Evaluate a radial spec as a function of ``|x|``."""
        r = np.asarray(r, dtype=np.float64)
        return _eval_radial(self, r * r)


def _eval_radial(spec: PotentialSpec, r2: np.ndarray) -> np.ndarray:
    p, k = spec.params, spec.kind
    if k == "harmonic":
        return p["kappa"] * r2
    if k == "soft-coulomb":
        return -p["q"] / np.sqrt(r2 + p["a"] ** 2)
    if k == "gaussian-well":
        return -p["depth"] * np.exp(-r2 / p["width"] ** 2)
    if k == "constant":
        return np.full(np.shape(r2), p["c"])
    if k == "power-singular":
        alpha, cap = p["alpha"], p.get("cap")
        if alpha == 0.0:
            return np.ones(np.shape(r2)) if cap is None else np.full(np.shape(r2), min(1.0, cap))
        zero = r2 == 0.0
        if cap is None and np.any(zero):
            raise SingularEvaluationError("power-singular potential evaluated at its singular point without a cap")
        with np.errstate(divide="ignore"):
            val = np.where(zero, np.inf, r2 ** (-0.5 * alpha))
        return val if cap is None else np.minimum(val, cap)
    if k == "sum":
        return sum(_eval_radial(t, r2) for t in p["terms"])
    raise InvalidParameter(f"{k!r} is not a radial potential")


def _eval_components(spec: PotentialSpec, comps: list) -> np.ndarray:
    # comps: d broadcastable coordinate arrays
    if spec.kind == "sum":
        return sum(_eval_components(t, comps) for t in spec.params["terms"])
    if spec.kind == "tabulated":
        nodes, vals = spec.params["nodes"], spec.params["values"]
        if len(nodes) != len(comps):
            raise InvalidParameter(f"tabulated potential is {len(nodes)}-dimensional, points are {len(comps)}-dimensional")
        shape = np.broadcast_shapes(*[np.shape(c) for c in comps])
        if len(nodes) == 1:
            return np.interp(np.broadcast_to(comps[0], shape), nodes[0], vals)
        pts = np.stack([np.clip(np.broadcast_to(c, shape), a[0], a[-1]) for c, a in zip(comps, nodes)], axis=-1)
        return RegularGridInterpolator(nodes, vals, method="linear")(pts)
    r2 = sum(c * c for c in comps)
    return _eval_radial(spec, r2)


def eval_potential_spec(spec: PotentialSpec, points) -> np.ndarray:
    """Evaluate ``spec`` at an array of d-vectors with shape ``(..., d)``.

    A 1-D input is read as a list of scalar (d = 1) points.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim <= 1:
        pts = pts[..., None]
    return np.asarray(_eval_components(spec, [pts[..., a] for a in range(pts.shape[-1])]), dtype=np.float64)


# ---------------------------------------------------------------- assembly


@dataclass(frozen=True, eq=False)
class AssembledPotential:
    grid: Grid
    values: GridFunction
    v: Optional[PotentialSpec] = None
    w: Optional[PotentialSpec] = None
    provenance: str = "specs"

    @classmethod
    def from_values(cls, grid: Grid, values, provenance: str = "manufactured") -> "AssembledPotential":
        gf = values if isinstance(values, GridFunction) else GridFunction(grid, values)
        if not gf.is_real:
            raise InvalidParameter("potentials must be real")
        return cls(grid, gf, None, None, provenance)

    def describe(self) -> dict:
        return {
            "v": None if self.v is None else self.v.to_dict(),
            "w": None if self.w is None else self.w.to_dict(),
            "provenance": self.provenance,
        }


def _check_even(w: PotentialSpec, d: int, L: float, seed: int = 12345, samples: int = 64):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-2 * L, 2 * L, size=(samples, d))
    a = eval_potential_spec(w, pts)
    b = eval_potential_spec(w, -pts)
    scale = np.maximum(np.abs(a), np.abs(b))
    if np.any(np.abs(a - b) > 1e-12 * np.maximum(scale, 1e-300)):
        raise ParityError("two-body potential w must be even: w(-x) != w(x) at sampled points")


def _place(arr: np.ndarray, axes: tuple, n: int) -> np.ndarray:
    # arrange a block indexed by `axes` so it broadcasts over the n-dim grid
    order = np.argsort(axes)
    arr = np.transpose(arr, order)
    shp = [1] * n
    for a in sorted(axes):
        shp[a] = arr.shape[sorted(axes).index(a)]
    return arr.reshape(shp)


def assemble_total_potential(v: PotentialSpec, w: Optional[PotentialSpec], grid: Grid) -> AssembledPotential:
    """``V = sum_i v(x_i) + sum_{i<j} w(x_i - x_j)`` on the full grid."""
    w = PotentialSpec.zero() if w is None else w
    d, N, n = grid.d, grid.N, grid.n
    g1 = grid.one_particle()
    v1 = _eval_components(v, g1.coords())
    v1 = np.broadcast_to(v1, g1.shape)
    V = np.zeros(grid.shape)
    for i in range(N):
        V = V + _place(v1, grid.particle_axes(i), n)
    if N > 1 and not w.is_zero:
        _check_even(w, d, grid.L)
        x = grid.axis()
        comps = []
        for a in range(d):
            shp = [1] * (2 * d)
            shp[a] = grid.m
            xa = x.reshape(shp)
            shp2 = [1] * (2 * d)
            shp2[d + a] = grid.m
            comps.append(xa - x.reshape(shp2))
        W = np.broadcast_to(_eval_components(w, comps), (grid.m,) * (2 * d))
        for i in range(N):
            for j in range(i + 1, N):
                V = V + _place(W, grid.particle_axes(i) + grid.particle_axes(j), n)
    V = np.broadcast_to(V, grid.shape)
    return AssembledPotential(grid, GridFunction(grid, V), v, w, "specs")


def default_kinetic(grid: Grid) -> str:
    return "spectral" if grid.periodic else "fd"


def build_hamiltonian(v: PotentialSpec, w: Optional[PotentialSpec], grid: Grid,
                      kinetic: str = "auto") -> OperatorHandle:
    """Matrix-free ``kinetic_nbody + multiply(V)``; the assembled potential is kept in ``params``."""
    pot = assemble_total_potential(v, w, grid)
    return hamiltonian_from_potential(pot, kinetic)


def hamiltonian_from_potential(pot: AssembledPotential, kinetic: str = "auto") -> OperatorHandle:
    grid = pot.grid
    method = default_kinetic(grid) if kinetic == "auto" else kinetic
    T = kinetic_nbody(grid, method)
    H = operator_sum(T, multiply(pot.values))
    H.params.update({"kinetic": method, "potential": pot})
    return H
