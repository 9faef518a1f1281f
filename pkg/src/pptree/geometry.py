"""Polar/Cartesian correspondence on R^k and the transform Jacobian.

The angle support is ``H = [0, pi]^(k-2) x [0, 2*pi)``: the first k-2
coordinates are colatitudes, the last one is the periodic longitude.
For k = 2 there is a single periodic angle on [0, 2*pi).
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

__all__ = [
    "PolarPoint",
    "cartesian_to_polar",
    "in_support",
    "jacobian_abs",
    "polar_to_cartesian",
    "unit_vector",
    "wrap_longitude",
]

_ORIGIN_EPS = 1e-12


class PolarPoint(NamedTuple):
    """Angles plus resultant length; ``theta`` has k-1 entries."""

    theta: np.ndarray
    r: float


def wrap_longitude(value):
    """Map a periodic angle into [0, 2*pi), identifying 2*pi with 0."""
    return np.mod(value, 2.0 * np.pi)


def in_support(theta: np.ndarray, k: int) -> bool:
    """True when theta lies in H (2*pi accepted as an alias of 0)."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape[-1] != k - 1:
        return False
    colat = theta[..., : k - 2]
    if np.any(colat < 0) or np.any(colat > np.pi):
        return False
    longitude = theta[..., k - 2]
    return bool(np.all(longitude >= 0) and np.all(longitude <= 2.0 * np.pi))


def unit_vector(theta: np.ndarray) -> np.ndarray:
    """Cartesian unit vector(s) for angle vector(s) theta.

    Accepts shape (k-1,) or (N, k-1) and returns (k,) or (N, k).
    """
    theta = np.asarray(theta, dtype=float)
    single = theta.ndim == 1
    t = np.atleast_2d(theta)
    n, km1 = t.shape
    k = km1 + 1
    sins = np.sin(t)
    coss = np.cos(t)
    x = np.empty((n, k))
    running = np.ones(n)
    for i in range(km1):
        x[:, i] = running * coss[:, i]
        running = running * sins[:, i]
    x[:, k - 1] = running
    return x[0] if single else x


def polar_to_cartesian(p: PolarPoint) -> np.ndarray:
    """Invert the polar transform: x_1 = r cos(theta_1), ... ."""
    theta = np.asarray(p.theta, dtype=float)
    u = unit_vector(theta)
    if theta.ndim == 1:
        return float(p.r) * u
    return np.asarray(p.r, dtype=float)[:, None] * u


def cartesian_to_polar(x: np.ndarray) -> PolarPoint:
    """Angles and resultant of a point in R^k, k >= 2.

    The longitude is recovered with the two-argument arctangent of
    (x_k, x_{k-1}) so all four quadrants resolve correctly; it lands in
    [0, 2*pi).  At a pole (all downstream coordinates zero) the
    remaining angles are 0 by convention.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size < 2:
        raise ValueError("cartesian_to_polar expects one point in R^k, k >= 2")
    r = float(np.linalg.norm(x))
    if r <= _ORIGIN_EPS:
        raise ValueError("point too close to the origin; angles are undefined")
    k = x.size
    theta = np.zeros(k - 1)
    # tail[i] = sqrt(x_{i+1}^2 + ... + x_k^2); atan2(tail, x_i) lies in [0, pi]
    tail = np.sqrt(np.cumsum(x[::-1] ** 2)[::-1])
    for i in range(k - 2):
        theta[i] = np.arctan2(tail[i + 1], x[i])
    theta[k - 2] = wrap_longitude(np.arctan2(x[k - 1], x[k - 2]))
    return PolarPoint(theta=theta, r=r)


def jacobian_abs(p: PolarPoint, k: int) -> float:
    """|J| = r^(k-1) * prod_{l=1}^{k-2} sin(theta_l)^(k-l-1).

    Zero at the poles is legitimate (the surface measure vanishes
    there).
    """
    theta = np.asarray(p.theta, dtype=float)
    r = float(p.r)
    if r <= 0:
        raise ValueError("jacobian_abs requires r > 0")
    value = r ** (k - 1)
    for i in range(k - 2):
        value *= np.sin(theta[i]) ** (k - i - 2)
    return float(value)
