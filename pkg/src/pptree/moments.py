"""Trigonometric moments, mean direction, concentration, and circular correlation.

Estimators come in two flavors: Riemann integrals against a density
grid, and plug-in versions for angle samples.  The mean direction is
always the quadrant-aware two-argument arctangent of the first
trigonometric moment; the naive ratio b/a misplaces two quadrants.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from pptree.projected_density import DensityGrid, marginal_density

__all__ = [
    "DirectionalSummary",
    "TrigMoment",
    "UndefinedCorrelationError",
    "circular_correlation_from_grid",
    "circular_correlation_from_samples",
    "mean_direction",
    "mean_direction_from_samples",
    "trig_moment_from_grid",
]

_MASS_TOL = 0.05
_CONC_EPS = 1e-12


class UndefinedCorrelationError(ValueError):
    """A coordinate has no angular variation, so the correlation is undefined."""


@dataclass(frozen=True)
class TrigMoment:
    """q-th trigonometric moment: a = E cos(q*Theta), b = E sin(q*Theta)."""

    order: int
    a: float
    b: float


@dataclass(frozen=True)
class DirectionalSummary:
    """Mean direction nu and concentration rho_conc = |E e^(i*Theta)|.

    ``defined`` is False when the first moment vanishes, in which case
    the direction is meaningless and rho_conc is 0.
    """

    nu: float
    rho_conc: float
    defined: bool = True


def trig_moment_from_grid(marginal: DensityGrid, q: int) -> TrigMoment:
    """Riemann-sum moment of a one-dimensional normalized density grid."""
    if len(marginal.free_coords) != 1:
        raise ValueError("trigonometric moments need a one-dimensional grid")
    mass = marginal.total_mass()
    if abs(mass - 1.0) > _MASS_TOL:
        raise ValueError(f"grid mass {mass:.4f} deviates more than 5% from 1")
    theta = marginal.axes[0]
    weights = marginal.values * marginal.cell_widths[0]
    return TrigMoment(
        order=q,
        a=float(weights @ np.cos(q * theta)),
        b=float(weights @ np.sin(q * theta)),
    )


def mean_direction(moment: TrigMoment) -> DirectionalSummary:
    """Mean direction and concentration from the first trigonometric moment."""
    if moment.order != 1:
        raise ValueError("mean direction is defined from the order-1 moment")
    rho = float(np.hypot(moment.a, moment.b))
    if rho < _CONC_EPS:
        return DirectionalSummary(nu=0.0, rho_conc=0.0, defined=False)
    nu = float(np.mod(np.arctan2(moment.b, moment.a), 2.0 * np.pi))
    return DirectionalSummary(nu=nu, rho_conc=rho)


def mean_direction_from_samples(theta: np.ndarray) -> DirectionalSummary:
    """Sample mean direction via the first empirical trigonometric moment."""
    theta = np.asarray(theta, dtype=float)
    return mean_direction(
        TrigMoment(order=1, a=float(np.mean(np.cos(theta))), b=float(np.mean(np.sin(theta))))
    )


def circular_correlation_from_samples(theta_l: np.ndarray, theta_h: np.ndarray) -> float:
    """Sine-based circular correlation of two equal-length angle samples.

    rho = sum sin(t_l - nu_l) sin(t_h - nu_h)
          / sqrt(sum sin^2(t_l - nu_l) * sum sin^2(t_h - nu_h)),
    with nu the sample mean directions.  Lies in [-1, 1]; zero under
    independence.
    """
    theta_l = np.asarray(theta_l, dtype=float)
    theta_h = np.asarray(theta_h, dtype=float)
    if theta_l.shape != theta_h.shape or theta_l.ndim != 1 or theta_l.size < 3:
        raise ValueError("need two equal-length samples with at least 3 observations")
    s_l = np.sin(theta_l - mean_direction_from_samples(theta_l).nu)
    s_h = np.sin(theta_h - mean_direction_from_samples(theta_h).nu)
    denom = np.sum(s_l**2) * np.sum(s_h**2)
    if denom < _CONC_EPS:
        raise UndefinedCorrelationError("a coordinate has zero angular variance")
    return float(np.sum(s_l * s_h) / np.sqrt(denom))


def circular_correlation_from_grid(joint: DensityGrid) -> float:
    """Grid version: expectations replaced by Riemann integrals."""
    if len(joint.free_coords) != 2:
        raise ValueError("grid correlation needs a two-dimensional joint grid")
    mass = joint.total_mass()
    if abs(mass - 1.0) > _MASS_TOL:
        raise ValueError(f"grid mass {mass:.4f} deviates more than 5% from 1")
    nus = []
    for coord in joint.free_coords:
        summary = mean_direction(trig_moment_from_grid(marginal_density(joint, coord), 1))
        nus.append(summary.nu)
    t0, t1 = np.meshgrid(joint.axes[0], joint.axes[1], indexing="ij")
    w = joint.values * joint.cell_volume
    s0 = np.sin(t0 - nus[0])
    s1 = np.sin(t1 - nus[1])
    denom = np.sum(w * s0**2) * np.sum(w * s1**2)
    if denom < _CONC_EPS:
        raise UndefinedCorrelationError("a coordinate has zero angular variance")
    return float(np.sum(w * s0 * s1) / np.sqrt(denom))
