"""The singular Carleman weight ``phi(r) = -ln r + (-ln r)^{-1/2}`` on the punctured unit ball."""

import math

import numpy as np

from ..errors import DomainError

PHI_HALF = math.log(2.0) + math.log(2.0) ** -0.5
# phi'(r) = 0 here: -ln r = 2^{-2/3}
CRITICAL_RADIUS = math.exp(-(2.0 ** (-2.0 / 3.0)))


def _check_r(r):
    r = np.asarray(r, dtype=np.float64)
    if np.any((r <= 0.0) | (r >= 1.0)):
        raise DomainError("the weight is defined only for 0 < |x| < 1")
    return r


def phi_radial(r):
    r = _check_r(r)
    t = -np.log(r)
    return t + t**-0.5


def weight_phi(x) -> float:
    """Weight at a point ``x`` (scalar or coordinate sequence)."""
    return float(phi_radial(float(np.linalg.norm(np.atleast_1d(np.asarray(x, dtype=np.float64))))))


def phi_derivatives(r, n: int):
    """``(phi, |grad phi|, lap phi)`` as functions of the radius in dimension ``n``."""
    r = _check_r(r)
    t = -np.log(r)
    g = 1.0 - 0.5 * t**-1.5
    lap = ((2 - n) * g + 0.75 * t**-2.5) / r**2
    return t + t**-0.5, np.abs(g) / r, lap
