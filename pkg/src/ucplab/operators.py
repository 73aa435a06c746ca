"""Matrix-free discrete operators on :class:`~ucplab.grid.Grid`.

Every operator acts on arrays whose leading axes match ``grid.shape``; an extra
trailing axis is treated as a batch of independent fields.
"""

from __future__ import annotations

import functools
from typing import Callable, NamedTuple, Optional

import numpy as np
import scipy.fft as sfft

from . import _kernels
from .errors import InvalidParameter
from .grid import Grid, GridFunction


# ---------------------------------------------------------------- wavenumbers


def wavenumbers(m: int, L: float, nyquist_zero: bool = False) -> np.ndarray:
    """Angular wavenumbers ``pi*j/L`` in FFT order, ``j`` in ``[-m/2, m/2)``."""
    k = np.pi / L * np.fft.fftfreq(m, 1.0 / m)
    if nyquist_zero and m % 2 == 0:
        k[m // 2] = 0.0
    return k


@functools.lru_cache(maxsize=64)
def _k2_full(grid: Grid) -> np.ndarray:
    k = wavenumbers(grid.m, grid.L)
    out = np.zeros(grid.shape)
    for a in range(grid.n):
        shp = [1] * grid.n
        shp[a] = grid.m
        out = out + (k * k).reshape(shp)
    out.flags.writeable = False
    return out


@functools.lru_cache(maxsize=64)
def _k2_axes(grid: Grid, axes: tuple) -> np.ndarray:
    k = wavenumbers(grid.m, grid.L)
    shp_all = [1] * grid.n
    out = np.zeros([grid.m if a in axes else 1 for a in range(grid.n)])
    for a in axes:
        shp = list(shp_all)
        shp[a] = grid.m
        out = out + (k * k).reshape(shp)
    out.flags.writeable = False
    return out


def _require_periodic(grid: Grid, what: str):
    if not grid.periodic:
        raise InvalidParameter(f"{what} requires a periodic grid, got boundary={grid.boundary!r}")


def _expand(sym: np.ndarray, x: np.ndarray, n: int) -> np.ndarray:
    return sym.reshape(sym.shape + (1,) * (x.ndim - n))


def fourier_multiply(x: np.ndarray, grid: Grid, symbol: np.ndarray) -> np.ndarray:
    """Apply a real, even Fourier symbol (given on the full FFT layout)."""
    axes = tuple(range(grid.n))
    if np.isrealobj(x):
        # real input: half spectrum along the last grid axis (the symbol is even)
        half = symbol[..., : symbol.shape[-1] // 2 + 1]
        xh = sfft.rfftn(x, axes=axes)
        xh *= _expand(half, xh, grid.n)
        return sfft.irfftn(xh, s=x.shape[: grid.n], axes=axes)
    xh = sfft.fftn(x, axes=axes)
    xh *= _expand(symbol, xh, grid.n)
    return sfft.ifftn(xh, axes=axes)


# ---------------------------------------------------------------- handle


class OperatorHandle:
    """Linear operator on grid fields.

    Parameters
    ----------
    grid : Grid
    kind : str
        One of ``laplacian-fd2``, ``laplacian-spectral``, ``frac-laplacian``,
        ``multiply``, ``kinetic-nbody``, ``sum``, ``scaled``, ``identity``.
    fn : callable
        Maps an array with leading ``grid.shape`` axes to an array of the same shape.
    symmetric : bool
        Self-adjoint with real spectrum.
    symbol : ndarray, optional
        Diagonal in the Fourier basis (periodic) or the DST-I basis (Dirichlet
        box) with these eigenvalues; used for preconditioning.
    """

    def __init__(self, grid: Grid, kind: str, fn: Callable, *, symmetric: bool = True,
                 symbol: Optional[np.ndarray] = None, params: Optional[dict] = None,
                 terms: tuple = (), real: bool = True):
        self.grid = grid
        self.kind = kind
        self._fn = fn
        self.symmetric = symmetric
        self.symbol = symbol
        self.params = dict(params or {})
        self.terms = tuple(terms)
        self.real = real

    def __repr__(self):
        extra = f", {self.params}" if self.params else ""
        return f"OperatorHandle({self.kind}{extra}, n={self.grid.n}, m={self.grid.m})"

    def apply(self, psi):
        if isinstance(psi, GridFunction):
            if psi.grid != self.grid:
                raise InvalidParameter("operator and field live on different grids")
            return GridFunction(self.grid, self._fn(np.asarray(psi.values)))
        x = np.asarray(psi)
        if x.shape[: self.grid.n] != self.grid.shape:
            x = x.reshape(self.grid.shape + x.shape[1:] if x.ndim == 2 else self.grid.shape)
        return self._fn(x)

    __call__ = apply

    def matvec(self, v: np.ndarray) -> np.ndarray:
        """Flat-vector interface: ``v`` has shape ``(size,)`` or ``(size, b)``."""
        shp = self.grid.shape + v.shape[1:]
        return self._fn(v.reshape(shp)).reshape(v.shape)

    def to_dense(self) -> np.ndarray:
        size = self.grid.size
        eye = np.eye(size)
        return self.matvec(eye)

    # -- algebra
    def __add__(self, other):
        if isinstance(other, (int, float, np.floating)):
            other = identity(self.grid).scaled(float(other))
        if not isinstance(other, OperatorHandle):
            return NotImplemented
        return operator_sum(self, other)

    __radd__ = __add__

    def scaled(self, a: float) -> "OperatorHandle":
        f = self._fn
        sym = None if self.symbol is None else a * self.symbol
        return OperatorHandle(self.grid, "scaled", lambda x: a * f(x), symmetric=self.symmetric and np.isreal(a),
                              symbol=sym, params={"factor": a}, terms=(self,), real=self.real)

    def __mul__(self, a):
        if isinstance(a, (int, float, np.floating)):
            return self.scaled(float(a))
        return NotImplemented

    __rmul__ = __mul__

    def find(self, predicate) -> list:
        """All handles in this expression tree satisfying ``predicate``."""
        hits = [self] if predicate(self) else []
        for t in self.terms:
            hits.extend(t.find(predicate))
        return hits


def operator_sum(*ops: OperatorHandle) -> OperatorHandle:
    grid = ops[0].grid
    if any(o.grid != grid for o in ops):
        raise InvalidParameter("cannot add operators on different grids")
    fns = [o._fn for o in ops]

    def fn(x):
        y = fns[0](x)
        for f in fns[1:]:
            y = y + f(x)
        return y

    return OperatorHandle(grid, "sum", fn, symmetric=all(o.symmetric for o in ops), terms=ops,
                          real=all(o.real for o in ops))


def identity(grid: Grid) -> OperatorHandle:
    return OperatorHandle(grid, "identity", lambda x: x.copy(), symbol=np.ones(grid.shape))


def multiply(f, grid: Optional[Grid] = None) -> OperatorHandle:
    """Pointwise multiplication by a field (GridFunction or array)."""
    if isinstance(f, GridFunction):
        grid, vals = f.grid, f.values
    else:
        if grid is None:
            raise InvalidParameter("multiply() needs a grid when given a bare array")
        vals = np.asarray(f)
        if vals.shape != grid.shape:
            raise InvalidParameter(f"multiplier shape {vals.shape} != grid shape {grid.shape}")
    real = vals.dtype.kind != "c"
    return OperatorHandle(grid, "multiply", lambda x: _expand(vals, x, grid.n) * x, symmetric=real,
                          params={}, real=real)


# ---------------------------------------------------------------- Laplacians


def dst_symbol_1d(m: int, h: float) -> np.ndarray:
    """Eigenvalues of the Dirichlet second difference ``-D2/h^2`` in DST-I order."""
    j = np.arange(1, m + 1)
    return 4.0 / h**2 * np.sin(np.pi * j / (2 * (m + 1))) ** 2


def fd2_symbol_1d(m: int, L: float, h: float) -> np.ndarray:
    k = wavenumbers(m, L)
    return 4.0 / h**2 * np.sin(0.5 * k * h) ** 2


def _fd_symbol(grid: Grid, axes) -> np.ndarray:
    s1 = dst_symbol_1d(grid.m, grid.h) if not grid.periodic else fd2_symbol_1d(grid.m, grid.L, grid.h)
    out = np.zeros([grid.m if a in axes else 1 for a in range(grid.n)])
    for a in axes:
        shp = [1] * grid.n
        shp[a] = grid.m
        out = out + s1.reshape(shp)
    return np.broadcast_to(out, grid.shape).copy()


def _fd_neg_laplacian(x: np.ndarray, grid: Grid, axes) -> np.ndarray:
    periodic = grid.periodic
    y = np.zeros_like(x)
    for a in axes:
        pre = int(np.prod(x.shape[:a], dtype=np.int64))
        post = int(np.prod(x.shape[a + 1:], dtype=np.int64))
        y -= _kernels.second_difference(x.reshape(pre, grid.m, post), periodic).reshape(x.shape)
    y /= grid.h**2
    return y


def neg_laplacian(grid: Grid, method: str = "spectral", axes=None) -> OperatorHandle:
    """``-Laplacian`` over ``axes`` (default: all) by spectral or 2nd-order FD."""
    axes = tuple(range(grid.n)) if axes is None else tuple(axes)
    if method == "spectral":
        _require_periodic(grid, "spectral Laplacian")
        sym = np.broadcast_to(_k2_axes(grid, axes), grid.shape)
        return OperatorHandle(grid, "laplacian-spectral", lambda x: fourier_multiply(x, grid, sym),
                              symbol=sym, params={"axes": axes})
    if method == "fd":
        return OperatorHandle(grid, "laplacian-fd2", lambda x: _fd_neg_laplacian(x, grid, axes),
                              symbol=_fd_symbol(grid, axes), params={"axes": axes})
    raise InvalidParameter(f"unknown Laplacian method {method!r}; expected 'spectral' or 'fd'")


def frac_laplacian(grid: Grid, s: float) -> OperatorHandle:
    """``(-Laplacian)^s`` as the Fourier multiplier ``|k|^{2s}`` (zero mode -> 0)."""
    _require_periodic(grid, "fractional Laplacian")
    if not 0.0 <= s <= 2.0:
        raise InvalidParameter(f"fractional power s must lie in [0, 2], got {s}")
    if s == 0.0:
        return OperatorHandle(grid, "frac-laplacian", lambda x: x.copy(), symbol=np.ones(grid.shape),
                              params={"s": 0.0})
    sym = frac_symbol(grid, s)
    return OperatorHandle(grid, "frac-laplacian", lambda x: fourier_multiply(x, grid, sym),
                          symbol=sym, params={"s": s})


def frac_symbol(grid: Grid, s: float) -> np.ndarray:
    """``|k|^{2s}`` on the full FFT layout; ``s`` must lie in ``[0, 2]``."""
    if not 0.0 <= s <= 2.0:
        raise InvalidParameter(f"fractional power s must lie in [0, 2], got {s}")
    if s == 0.0:
        return np.ones(grid.shape)
    if s == 1.0:
        return np.asarray(_k2_full(grid))
    return _k2_full(grid) ** s


def frac_laplacian_apply(psi: GridFunction, s: float) -> GridFunction:
    if s == 0.0:
        _require_periodic(psi.grid, "fractional Laplacian")
        return psi
    return frac_laplacian(psi.grid, s).apply(psi)


def kinetic_nbody(grid: Grid, method: str = "spectral") -> OperatorHandle:
    """Kronecker sum ``sum_i (-Laplacian_{x_i})`` built particle block by particle block."""
    blocks = [neg_laplacian(grid, method, grid.particle_axes(i)) for i in range(grid.N)]
    fns = [b._fn for b in blocks]

    sym = sum(b.symbol for b in blocks)

    def fn(x):
        if method == "spectral" and grid.periodic:
            # the Kronecker sum is diagonal in the joint Fourier basis: one transform suffices
            return fourier_multiply(x, grid, sym)
        y = fns[0](x)
        for f in fns[1:]:
            y += f(x)
        return y

    return OperatorHandle(grid, "kinetic-nbody", fn, symbol=sym,
                          params={"method": method, "basis": "fourier" if grid.periodic else "dst"},
                          terms=tuple(blocks))


def kinetic_nbody_apply(psi: GridFunction, method: str = "spectral") -> GridFunction:
    return kinetic_nbody(psi.grid, method).apply(psi)


def spectral_gradient(values: np.ndarray, grid: Grid) -> list:
    """Spectral partial derivatives (Nyquist mode dropped) of a periodic field."""
    _require_periodic(grid, "spectral gradient")
    axes = tuple(range(grid.n))
    vh = sfft.fftn(values, axes=axes)
    k = wavenumbers(grid.m, grid.L, nyquist_zero=True)
    out = []
    for a in range(grid.n):
        shp = [1] * grid.n
        shp[a] = grid.m
        d = sfft.ifftn(1j * k.reshape(shp) * vh, axes=axes)
        out.append(d.real if np.isrealobj(values) else d)
    return out


def fd_gradient(values: np.ndarray, grid: Grid) -> list:
    """Centred differences; zero ghost values on Dirichlet boxes."""
    out = []
    for a in range(grid.n):
        if grid.periodic:
            d = (np.roll(values, -1, axis=a) - np.roll(values, 1, axis=a)) / (2 * grid.h)
        else:
            pad = [(0, 0)] * values.ndim
            pad[a] = (1, 1)
            vp = np.pad(values, pad)
            sl_p = [slice(None)] * values.ndim
            sl_m = [slice(None)] * values.ndim
            sl_p[a] = slice(2, None)
            sl_m[a] = slice(None, -2)
            d = (vp[tuple(sl_p)] - vp[tuple(sl_m)]) / (2 * grid.h)
        out.append(d)
    return out


# ---------------------------------------------------------------- symbol inequality


class SymbolReport(NamedTuple):
    violations: int
    max_gap: float
    samples: int
    low_frequency_violations: int
    low_frequency_max_gap: float


def verify_symbol_inequality(delta: float, samples: int, N: int, seed: int, *,
                             kmax: float = 1e4, rtol: float = 1e-12, chunk: int = 200_000) -> SymbolReport:
    """Sample ``sum |k_i|^p <= (sum k_i^2)^{p/2}`` with ``p = 3 - 4*delta``.

    Components are log-uniform on ``[1, kmax]`` for the main count; a second,
    separately reported sample draws components log-uniformly on
    ``[1e-6, 1]``. ``max_gap`` is the largest relative excess of the left side
    (negative when the inequality holds strictly everywhere).
    """
    if not 0.0 <= delta <= 0.25:
        raise InvalidParameter(f"delta must lie in [0, 1/4], got {delta}")
    if samples < 1 or N < 1:
        raise InvalidParameter("samples and N must be positive")
    p = 3.0 - 4.0 * delta
    rng = np.random.default_rng(seed)

    def scan(lo, hi):
        count, worst, done = 0, -np.inf, 0
        while done < samples:
            b = min(chunk, samples - done)
            k = np.exp(rng.uniform(np.log(lo), np.log(hi), size=(b, N)))
            k *= rng.choice((-1.0, 1.0), size=(b, N))
            c, w = _kernels.symbol_scan(k, p, rtol)
            count += c
            worst = max(worst, w)
            done += b
        return count, float(worst)

    v, g = scan(1.0, kmax)
    lv, lg = scan(1e-6, 1.0)
    return SymbolReport(v, g, samples, lv, lg)
