"""Density of the projected tree on the hypersphere, via quadrature.

The angle density is the integral over the latent resultant r of the
tree density times the polar Jacobian.  It is approximated by the
right-endpoint Riemann rule on an equally spaced partition of
(0, r_max], the rule used throughout for both density output and
likelihood evaluation in the sampler; a trapezoidal variant exists for
accuracy studies.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from pptree.geometry import in_support, unit_vector
from pptree.polya_tree import BranchingProbabilities, CenteringMeasure, TreeShape, tree_log_weights

__all__ = [
    "DegenerateConditionalError",
    "DensityGrid",
    "QuadratureRule",
    "RegressionContext",
    "RegressionCurve",
    "axis_midpoints",
    "conditional_density",
    "joint_grid",
    "marginal_density",
    "projected_density_at",
    "projected_density_batch",
    "regression_curve",
]

_MASS_EPS = 1e-12
_EVAL_CHUNK = 8192


class DegenerateConditionalError(ValueError):
    """Conditioning slice carries (numerically) no probability mass."""


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes r^(1) < ... < r^(T) on (0, r_max], with r^(0) = 0 implied."""

    nodes: np.ndarray
    mode: str = "riemann"

    def __post_init__(self) -> None:
        nodes = np.asarray(self.nodes, dtype=float)
        object.__setattr__(self, "nodes", nodes)
        if nodes.size < 2 or nodes[0] <= 0 or np.any(np.diff(nodes) <= 0):
            raise ValueError("quadrature nodes must be >= 2, positive, strictly increasing")
        if self.mode not in ("riemann", "trapezoid"):
            raise ValueError(f"unknown quadrature mode {self.mode!r}")

    @classmethod
    def equally_spaced(cls, T: int, r_max: float, mode: str = "riemann") -> "QuadratureRule":
        if T < 2 or r_max <= 0:
            raise ValueError("need T >= 2 nodes and r_max > 0")
        return cls(nodes=np.linspace(r_max / T, r_max, T), mode=mode)

    @classmethod
    def for_center(cls, T: int, mu: np.ndarray, mode: str = "riemann") -> "QuadratureRule":
        """Default upper limit ||mu|| + 4: resultants concentrate near ||mu||."""
        return cls.equally_spaced(T, float(np.linalg.norm(mu)) + 4.0, mode=mode)

    @classmethod
    def for_regression(
        cls, T: int, gamma: np.ndarray, Z: np.ndarray, mode: str = "riemann"
    ) -> "QuadratureRule":
        """Upper limit max_i ||Gamma z_i|| + 4 over the covariate rows."""
        shifts = np.atleast_2d(Z) @ np.asarray(gamma, dtype=float).T
        return cls.equally_spaced(T, float(np.max(np.linalg.norm(shifts, axis=1))) + 4.0, mode=mode)

    @property
    def weights(self) -> np.ndarray:
        full = np.concatenate(([0.0], self.nodes))
        diffs = np.diff(full)
        if self.mode == "riemann":
            return diffs
        w = np.empty_like(self.nodes)
        w[:-1] = (self.nodes[1:] - full[:-2]) / 2.0
        w[-1] = diffs[-1] / 2.0
        return w


@dataclass(frozen=True)
class RegressionContext:
    """Linear shift Gamma @ z applied to the latent Cartesian point.

    Inactive contexts contribute a zero shift; active ones require the
    centering location to be the origin (the regression model absorbs
    location into the coefficients).
    """

    gamma: np.ndarray | None = None
    z: np.ndarray | None = None
    active: bool = False

    def __post_init__(self) -> None:
        if self.active:
            g = np.asarray(self.gamma, dtype=float)
            zv = np.asarray(self.z, dtype=float)
            if g.ndim != 2 or zv.ndim != 1 or g.shape[1] != zv.size:
                raise ValueError("coefficient matrix (k,p) and covariates (p,) must align")
            object.__setattr__(self, "gamma", g)
            object.__setattr__(self, "z", zv)

    def shift(self, k: int) -> np.ndarray:
        if not self.active:
            return np.zeros(k)
        return self.gamma @ self.z


INACTIVE_REGRESSION = RegressionContext()


def _sin_power_factor(thetas: np.ndarray, k: int) -> np.ndarray:
    """prod_{l=1}^{k-2} sin(theta_l)^(k-l-1) for each angle row."""
    out = np.ones(thetas.shape[0])
    for i in range(k - 2):
        out *= np.sin(thetas[:, i]) ** (k - i - 2)
    return out


def _batch_density(
    shape: TreeShape,
    probs: BranchingProbabilities,
    center: CenteringMeasure,
    quad: QuadratureRule,
    thetas: np.ndarray,
    shifts: np.ndarray,
) -> np.ndarray:
    """Quadrature core: density at each angle row, with per-row or shared
    Cartesian shift (no support validation)."""
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    k = shape.k
    shifts = np.asarray(shifts, dtype=float)
    units = np.atleast_2d(unit_vector(thetas))
    sin_factor = _sin_power_factor(thetas, k)
    r = quad.nodes
    w = quad.weights * r ** (k - 1)
    scale = 2.0 ** (k * shape.M)
    out = np.empty(thetas.shape[0])
    for start in range(0, thetas.shape[0], _EVAL_CHUNK):
        stop = start + _EVAL_CHUNK
        u = units[start:stop]
        s = shifts if shifts.ndim == 1 else shifts[start:stop, None, :]
        pts = r[None, :, None] * u[:, None, :] - s
        flat = pts.reshape(-1, k)
        logw = tree_log_weights(shape, probs, center, flat) + center.log_density(flat)
        integrand = np.exp(logw).reshape(u.shape[0], r.size)
        out[start:stop] = integrand @ w
    return scale * sin_factor * out


def projected_density_batch(
    shape: TreeShape,
    probs: BranchingProbabilities,
    center: CenteringMeasure,
    quad: QuadratureRule,
    thetas: np.ndarray,
    reg: RegressionContext = INACTIVE_REGRESSION,
) -> np.ndarray:
    """Angle density at each row of ``thetas`` (no support validation)."""
    return _batch_density(shape, probs, center, quad, thetas, reg.shift(shape.k))


def projected_density_at(
    shape: TreeShape,
    probs: BranchingProbabilities,
    center: CenteringMeasure,
    quad: QuadratureRule,
    theta: np.ndarray,
    reg: RegressionContext = INACTIVE_REGRESSION,
) -> float:
    """Projected-tree density of one angle vector in H."""
    theta = np.asarray(theta, dtype=float)
    if not in_support(theta, shape.k):
        raise ValueError(f"angle vector {theta} outside the support H for k={shape.k}")
    if reg.active and np.any(center.mu != 0.0):
        raise ValueError("active regression requires the centering location to be 0")
    return float(projected_density_batch(shape, probs, center, quad, theta, reg)[0])


@dataclass
class DensityGrid:
    """Density values on a midpoint tensor grid over free angle coordinates.

    ``axes[i]`` holds the cell midpoints of free coordinate
    ``free_coords[i]`` (0-based angle index); colatitude axes span
    [0, pi], the periodic axis spans [0, 2*pi).  ``conditioned`` maps
    fixed coordinates to their values for grids produced by slicing.
    """

    axes: list[np.ndarray]
    values: np.ndarray
    k: int
    free_coords: tuple[int, ...]
    conditioned: dict[int, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.values.shape != tuple(len(a) for a in self.axes):
            raise ValueError("grid values shape does not match the axes")

    @property
    def cell_widths(self) -> list[float]:
        widths = []
        for i, coord in enumerate(self.free_coords):
            length = np.pi if coord < self.k - 2 else 2.0 * np.pi
            widths.append(length / len(self.axes[i]))
        return widths

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.cell_widths))

    def total_mass(self) -> float:
        return float(self.values.sum() * self.cell_volume)

    def copy(self) -> "DensityGrid":
        return DensityGrid(
            axes=[a.copy() for a in self.axes],
            values=self.values.copy(),
            k=self.k,
            free_coords=self.free_coords,
            conditioned=dict(self.conditioned),
        )


def axis_midpoints(coord: int, k: int, resolution: int) -> np.ndarray:
    """Uniform cell midpoints on the coordinate's support."""
    length = np.pi if coord < k - 2 else 2.0 * np.pi
    step = length / resolution
    return step * (np.arange(resolution) + 0.5)


def joint_grid(
    shape: TreeShape,
    probs: BranchingProbabilities,
    center: CenteringMeasure,
    quad: QuadratureRule,
    resolution: int = 100,
    reg: RegressionContext = INACTIVE_REGRESSION,
) -> DensityGrid:
    """Evaluate the joint angle density on a full-support midpoint grid."""
    if resolution < 16:
        raise ValueError(f"resolution must be >= 16 per axis, got {resolution}")
    if reg.active and np.any(center.mu != 0.0):
        raise ValueError("active regression requires the centering location to be 0")
    k = shape.k
    axes = [axis_midpoints(coord, k, resolution) for coord in range(k - 1)]
    mesh = np.meshgrid(*axes, indexing="ij")
    thetas = np.stack([m.ravel() for m in mesh], axis=-1)
    values = projected_density_batch(shape, probs, center, quad, thetas, reg)
    return DensityGrid(
        axes=axes,
        values=values.reshape([resolution] * (k - 1)),
        k=k,
        free_coords=tuple(range(k - 1)),
    )


def marginal_density(grid: DensityGrid, coord: int) -> DensityGrid:
    """Riemann-integrate the joint over every free coordinate except ``coord``."""
    if grid.conditioned:
        raise ValueError("marginals require a full-support grid, not a conditioned slice")
    if coord not in grid.free_coords:
        raise ValueError(f"coordinate {coord} is not free in this grid")
    pos = grid.free_coords.index(coord)
    other = [i for i in range(len(grid.free_coords)) if i != pos]
    weight = float(np.prod([grid.cell_widths[i] for i in other])) if other else 1.0
    values = grid.values.sum(axis=tuple(other)) * weight if other else grid.values.copy()
    return DensityGrid(
        axes=[grid.axes[pos].copy()],
        values=values,
        k=grid.k,
        free_coords=(coord,),
    )


def conditional_density(grid: DensityGrid, conditions: dict[int, float]) -> DensityGrid:
    """Slice the joint at the given coordinate values and renormalize.

    Conditioning values snap to the nearest grid cell.  The result
    integrates to one over the remaining free coordinates.
    """
    if not conditions:
        raise ValueError("no conditioning coordinates given")
    free = list(grid.free_coords)
    for coord in conditions:
        if coord not in free:
            raise ValueError(f"coordinate {coord} is not free in this grid")
    keep = [i for i, c in enumerate(free) if c not in conditions]
    if not keep:
        raise ValueError("at least one coordinate must remain free")
    indexer: list[object] = []
    snapped: dict[int, float] = {}
    for i, c in enumerate(free):
        if c in conditions:
            idx = int(np.argmin(np.abs(grid.axes[i] - conditions[c])))
            indexer.append(idx)
            snapped[c] = float(grid.axes[i][idx])
        else:
            indexer.append(slice(None))
    sliced = grid.values[tuple(indexer)]
    widths = [grid.cell_widths[i] for i in keep]
    mass = float(sliced.sum() * np.prod(widths))
    if mass < _MASS_EPS:
        raise DegenerateConditionalError(
            f"conditioning slice at {snapped} has mass {mass:.3e} below {_MASS_EPS}"
        )
    return DensityGrid(
        axes=[grid.axes[i].copy() for i in keep],
        values=sliced / mass,
        k=grid.k,
        free_coords=tuple(free[i] for i in keep),
        conditioned={**grid.conditioned, **snapped},
    )


class RegressionCurve(NamedTuple):
    """Conditional-mean curve over a conditioning coordinate's grid."""

    conditioning_values: np.ndarray
    conditional_means: np.ndarray
    concentrations: np.ndarray
    defined: np.ndarray


def regression_curve(
    grid: DensityGrid,
    response: int,
    conditioning: int,
    circular: bool | None = None,
) -> RegressionCurve:
    """Conditional mean of ``response`` at each ``conditioning`` grid value.

    The periodic coordinate uses the circular mean direction (atan2 of
    the first trigonometric moments); colatitudes use the arithmetic
    conditional expectation, since [0, pi] is not periodic.  Passing
    ``circular`` overrides the default choice.  Cells whose slice is
    degenerate, or whose circular mean has vanishing concentration, are
    flagged undefined rather than aborting the whole curve.
    """
    if len(grid.free_coords) != 2:
        raise ValueError("regression curves need a two-dimensional grid")
    if {response, conditioning} != set(grid.free_coords):
        raise ValueError("response and conditioning must be the two free coordinates")
    if circular is None:
        circular = response == grid.k - 2
    r_pos = grid.free_coords.index(response)
    c_pos = grid.free_coords.index(conditioning)
    resp_axis = grid.axes[r_pos]
    cond_axis = grid.axes[c_pos]
    width = grid.cell_widths[r_pos]

    # slice weights: rows = conditioning cells, cols = response cells
    table = grid.values if c_pos == 0 else grid.values.T
    mass = table.sum(axis=1) * width
    means = np.full(cond_axis.size, np.nan)
    concs = np.full(cond_axis.size, np.nan)
    defined = mass >= _MASS_EPS
    ok = defined.copy()
    if np.any(ok):
        f = table[ok] / mass[ok, None] * width
        if circular:
            a = f @ np.cos(resp_axis)
            b = f @ np.sin(resp_axis)
            rho = np.hypot(a, b)
            means[ok] = np.mod(np.arctan2(b, a), 2.0 * np.pi)
            concs[ok] = rho
            weak = np.zeros_like(defined)
            weak[ok] = rho < 1e-8
            defined = defined & ~weak
        else:
            means[ok] = f @ resp_axis
    return RegressionCurve(
        conditioning_values=cond_axis.copy(),
        conditional_means=means,
        concentrations=concs,
        defined=defined,
    )
