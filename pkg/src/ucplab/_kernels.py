"""Hot loops with a numba path and a pure-numpy path.

Set ``UCPLAB_DISABLE_NUMBA=1`` before import to force the numpy path. Both
variants of every kernel stay importable (``*_numpy`` / ``*_loop``) so tests and
benchmarks can compare them directly.
"""

import os

import numpy as np

_DISABLED = os.environ.get("UCPLAB_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes", "on")

try:
    if _DISABLED:
        raise ImportError
    from numba import njit as _njit
except ImportError:  # pragma: no cover - depends on environment
    _njit = None

USING_NUMBA = _njit is not None


def _jit(fn):
    return _njit(cache=False, nogil=True)(fn) if USING_NUMBA else fn


# ---------------------------------------------------------------- second difference


def second_difference_numpy(a, periodic):
    """Unscaled second difference along axis 1 of a ``(pre, m, post)`` array."""
    out = -2.0 * a
    if periodic:
        out += np.roll(a, 1, axis=1)
        out += np.roll(a, -1, axis=1)
    else:
        out[:, 1:] += a[:, :-1]
        out[:, :-1] += a[:, 1:]
    return out


def second_difference_loop(a, periodic):
    pre, m, post = a.shape
    out = np.empty_like(a)
    for i in range(pre):
        for j in range(m):
            for k in range(post):
                s = -2.0 * a[i, j, k]
                if j > 0:
                    s += a[i, j - 1, k]
                elif periodic:
                    s += a[i, m - 1, k]
                if j < m - 1:
                    s += a[i, j + 1, k]
                elif periodic:
                    s += a[i, 0, k]
                out[i, j, k] = s
    return out


# ---------------------------------------------------------------- weighted ball sum


def ball_weighted_sum_numpy(abs2, r, radius, tau, rmin):
    """Sum of ``abs2 * r**(-tau)`` over ``r <= radius``.

    For ``tau > 0`` points with ``r < rmin`` are dropped and counted.
    Returns ``(total, n_used, n_dropped)``.
    """
    inside = r <= radius
    if tau > 0.0:
        drop = inside & (r < rmin)
        keep = inside & ~drop
        total = np.sum(abs2[keep] * r[keep] ** (-tau))
        return float(total), int(keep.sum()), int(drop.sum())
    return float(np.sum(abs2[inside])), int(inside.sum()), 0


def ball_weighted_sum_loop(abs2, r, radius, tau, rmin):
    total = 0.0
    used = 0
    dropped = 0
    for i in range(r.size):
        ri = r[i]
        if ri > radius:
            continue
        if tau > 0.0:
            if ri < rmin:
                dropped += 1
                continue
            total += abs2[i] * ri ** (-tau)
        else:
            total += abs2[i]
        used += 1
    return total, used, dropped


# ---------------------------------------------------------------- nested ball masses


def ball_masses_numpy(abs2, r, radii):
    """Masses ``sum(abs2[r <= radii[k]])`` for increasing ``radii``."""
    idx = np.searchsorted(radii, r, side="left")
    bins = np.bincount(idx, weights=abs2, minlength=radii.size + 1)
    return np.cumsum(bins)[: radii.size]


def ball_masses_loop(abs2, r, radii):
    nr = radii.size
    bins = np.zeros(nr + 1)
    for i in range(r.size):
        lo = 0
        hi = nr
        ri = r[i]
        while lo < hi:
            mid = (lo + hi) // 2
            if radii[mid] < ri:
                lo = mid + 1
            else:
                hi = mid
        bins[lo] += abs2[i]
    out = np.empty(nr)
    acc = 0.0
    for k in range(nr):
        acc += bins[k]
        out[k] = acc
    return out


# ---------------------------------------------------------------- symbol scan


def symbol_scan_numpy(k, power, rtol):
    """Compare ``sum |k_i|**power`` against ``(sum k_i**2)**(power/2)`` row-wise.

    Returns ``(n_violations, max_relative_excess)``.
    """
    a = np.abs(k)
    lhs = np.sum(a**power, axis=1)
    rhs = np.sum(a * a, axis=1) ** (0.5 * power)
    scale = np.where(rhs > 0.0, rhs, 1.0)
    excess = (lhs - rhs) / scale
    return int(np.count_nonzero(excess > rtol)), float(excess.max()) if excess.size else 0.0


def symbol_scan_loop(k, power, rtol):
    count = 0
    worst = -np.inf
    for i in range(k.shape[0]):
        lhs = 0.0
        sq = 0.0
        for j in range(k.shape[1]):
            a = abs(k[i, j])
            lhs += a**power
            sq += a * a
        rhs = sq ** (0.5 * power)
        scale = rhs if rhs > 0.0 else 1.0
        e = (lhs - rhs) / scale
        if e > rtol:
            count += 1
        if e > worst:
            worst = e
    if k.shape[0] == 0:
        worst = 0.0
    return count, worst


if USING_NUMBA:
    second_difference_loop = _jit(second_difference_loop)
    ball_weighted_sum_loop = _jit(ball_weighted_sum_loop)
    ball_masses_loop = _jit(ball_masses_loop)
    symbol_scan_loop = _jit(symbol_scan_loop)


def second_difference(a, periodic):
    a = np.ascontiguousarray(a)
    if USING_NUMBA and a.dtype in (np.float64, np.complex128):
        return second_difference_loop(a, bool(periodic))
    return second_difference_numpy(a, periodic)


def ball_weighted_sum(abs2, r, radius, tau, rmin):
    abs2 = np.ascontiguousarray(abs2, dtype=np.float64).ravel()
    r = np.ascontiguousarray(r, dtype=np.float64).ravel()
    if USING_NUMBA:
        t, u, d = ball_weighted_sum_loop(abs2, r, float(radius), float(tau), float(rmin))
        return float(t), int(u), int(d)
    return ball_weighted_sum_numpy(abs2, r, radius, tau, rmin)


def ball_masses(abs2, r, radii):
    abs2 = np.ascontiguousarray(abs2, dtype=np.float64).ravel()
    r = np.ascontiguousarray(r, dtype=np.float64).ravel()
    radii = np.ascontiguousarray(radii, dtype=np.float64)
    if USING_NUMBA:
        return ball_masses_loop(abs2, r, radii)
    return ball_masses_numpy(abs2, r, radii)


def symbol_scan(k, power, rtol):
    k = np.ascontiguousarray(k, dtype=np.float64)
    if USING_NUMBA:
        c, w = symbol_scan_loop(k, float(power), float(rtol))
        return int(c), float(w)
    return symbol_scan_numpy(k, power, rtol)
