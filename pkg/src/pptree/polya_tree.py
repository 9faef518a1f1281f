"""Finite multivariate Polya tree on R^k.

The partition at level m is the k-fold product of the 2^m dyadic
quantile intervals of the centering marginals, so every set splits into
2^k children one level down.  Branching probabilities are Dirichlet
with symmetric parameter ``alpha * (m+1)**delta`` at level m, stored as
one flat ``(2^(k*m), 2^k)`` array per internal level: row = node in
row-major mixed-radix order (first coordinate most significant), column
= child in the same bit order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from pptree.numerics import log_gamma, normal_quantile, std_normal_cdf

__all__ = [
    "BranchingProbabilities",
    "CenteringMeasure",
    "NodeAddress",
    "TreeShape",
    "group_children",
    "locate",
    "log_prior_density_Y",
    "partition_bounds",
    "prior_alphas",
    "sample_prior",
    "set_probability",
    "tree_density",
    "tree_log_weights",
]


@dataclass(frozen=True)
class TreeShape:
    """Dimension k, depth M, precision alpha, and branching exponent delta.

    delta > 1 is the absolute-continuity condition for the infinite
    tree; finite trees are well defined for any delta >= 1, and
    delta = 1 is accepted for diagnostic use.  M = 0 is the degenerate
    tree whose density is the centering density itself.
    """

    k: int
    M: int
    alpha: float
    delta: float

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError(f"dimension k must be >= 1, got {self.k}")
        if self.M < 0:
            raise ValueError(f"depth M must be >= 0, got {self.M}")
        if self.alpha <= 0:
            raise ValueError(f"precision alpha must be positive, got {self.alpha}")
        if self.delta < 1:
            raise ValueError(f"branching exponent delta must be >= 1, got {self.delta}")

    @property
    def fanout(self) -> int:
        return 2**self.k

    def nodes_at(self, level: int) -> int:
        return 2 ** (self.k * level)


@dataclass(frozen=True)
class NodeAddress:
    """Level m and 1-based per-coordinate index vector j, 1 <= j_l <= 2^m."""

    level: int
    index: tuple[int, ...]

    def __post_init__(self) -> None:
        top = 2**self.level
        if self.level < 0 or any(j < 1 or j > top for j in self.index):
            raise ValueError(f"invalid node address: level={self.level}, index={self.index}")

    def parent(self) -> "NodeAddress":
        if self.level == 0:
            raise ValueError("root has no parent")
        return NodeAddress(self.level - 1, tuple((j + 1) // 2 for j in self.index))


@dataclass(frozen=True)
class CenteringMeasure:
    """Product of unit-precision normals with location vector mu."""

    mu: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "mu", np.asarray(self.mu, dtype=float))
        if self.mu.ndim != 1:
            raise ValueError("mu must be a vector")

    @property
    def k(self) -> int:
        return self.mu.size

    def marginal_quantile(self, coord: int, p: float) -> float:
        return float(self.mu[coord] + normal_quantile(p))

    def log_density(self, x: np.ndarray) -> np.ndarray:
        """Log product-normal density, vectorized over rows of x."""
        x = np.asarray(x, dtype=float)
        d = x - self.mu
        return -0.5 * self.k * np.log(2.0 * np.pi) - 0.5 * np.sum(d * d, axis=-1)


@dataclass
class BranchingProbabilities:
    """Per-internal-node child probability vectors.

    ``levels[m]`` has shape (2^(k*m), 2^k); rows sum to one.  When
    ``frozen_root`` is set the level-0 vector is the exact uniform
    vector and is excluded from both resampling and the prior density.
    """

    levels: list[np.ndarray] = field(default_factory=list)
    frozen_root: bool = False

    @property
    def depth(self) -> int:
        return len(self.levels)

    def copy(self) -> "BranchingProbabilities":
        return BranchingProbabilities(
            levels=[lv.copy() for lv in self.levels], frozen_root=self.frozen_root
        )


def _flat_offsets(digits: np.ndarray, base: int) -> np.ndarray:
    """Row-major mixed-radix value of 0-based digit rows, first digit most significant."""
    k = digits.shape[-1]
    powers = base ** np.arange(k - 1, -1, -1, dtype=np.int64)
    return digits @ powers


def node_offset(shape: TreeShape, node: NodeAddress) -> int:
    """Flat storage offset of a node within its level."""
    digits = np.asarray(node.index, dtype=np.int64) - 1
    return int(_flat_offsets(digits, 2**node.level))


def partition_bounds(
    shape: TreeShape, center: CenteringMeasure, level: int, coord: int, index: int
) -> tuple[float, float]:
    """Marginal interval (lower, upper] of set ``index`` at ``level``.

    ``coord`` is 0-based.  The first interval opens at -inf and the
    last closes at +inf.
    """
    top = 2**level
    if not (1 <= index <= top):
        raise ValueError(f"index {index} out of range at level {level}")
    if not (0 <= coord < shape.k):
        raise ValueError(f"coordinate {coord} out of range for k={shape.k}")
    lo = -np.inf if index == 1 else center.marginal_quantile(coord, (index - 1) / top)
    hi = np.inf if index == top else center.marginal_quantile(coord, index / top)
    return lo, hi


def locate_indices(center: CenteringMeasure, x: np.ndarray, level: int) -> np.ndarray:
    """1-based index matrix of the level-``level`` sets containing rows of x.

    Uses j = ceil(2^m * F0(x)) so boundary points fall into the left
    (closed-right) interval; clipping absorbs CDF saturation far in the
    tails.
    """
    u = std_normal_cdf(np.atleast_2d(x) - center.mu)
    scale = 2**level
    return np.clip(np.ceil(scale * u).astype(np.int64), 1, scale)


def locate(shape: TreeShape, center: CenteringMeasure, x: np.ndarray, level: int) -> NodeAddress:
    """Address of the level-``level`` partition set containing x."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("locate requires finite coordinates")
    if not (1 <= level <= shape.M):
        raise ValueError(f"level must be in [1, {shape.M}], got {level}")
    j = locate_indices(center, x, level)[0]
    return NodeAddress(level, tuple(int(v) for v in j))


def prior_alphas(shape: TreeShape, node: NodeAddress) -> np.ndarray:
    """Symmetric Dirichlet parameter for a node's child split."""
    if not (0 <= node.level <= shape.M - 1):
        raise ValueError(f"level {node.level} has no children in a depth-{shape.M} tree")
    value = shape.alpha * (node.level + 1) ** shape.delta
    return np.full(shape.fanout, value)


def level_alpha(shape: TreeShape, level: int) -> float:
    """Dirichlet parameter shared by every node at an internal level."""
    return shape.alpha * (level + 1) ** shape.delta


def sample_prior(
    shape: TreeShape, rng: np.random.Generator, frozen_root: bool = False
) -> BranchingProbabilities:
    """Independent Dirichlet draws for every internal node.

    With ``frozen_root`` the level-0 vector is set to the exact uniform
    split and consumes no randomness (regression identifiability
    constraint).
    """
    levels: list[np.ndarray] = []
    for m in range(shape.M):
        n_nodes = shape.nodes_at(m)
        if m == 0 and frozen_root:
            levels.append(np.full((1, shape.fanout), 1.0 / shape.fanout))
            continue
        draws = rng.gamma(level_alpha(shape, m), size=(n_nodes, shape.fanout))
        totals = draws.sum(axis=1, keepdims=True)
        bad = totals[:, 0] <= 0.0
        if np.any(bad):
            draws[bad] = np.maximum(draws[bad], np.finfo(float).tiny)
            totals = draws.sum(axis=1, keepdims=True)
        levels.append(draws / totals)
    return BranchingProbabilities(levels=levels, frozen_root=frozen_root)


def set_probability(shape: TreeShape, probs: BranchingProbabilities, node: NodeAddress) -> float:
    """F(B_node): product of branching probabilities down the ancestor chain."""
    if not (1 <= node.level <= shape.M):
        raise ValueError(f"level must be in [1, {shape.M}], got {node.level}")
    value = 1.0
    j = np.asarray(node.index, dtype=np.int64)
    for m in range(node.level, 0, -1):
        parent = (j + 1) // 2
        child_bits = j - 2 * parent + 1
        row = int(_flat_offsets(parent - 1, 2 ** (m - 1)))
        col = int(_flat_offsets(child_bits, 2))
        value *= probs.levels[m - 1][row, col]
        j = parent
    return float(value)


def tree_log_weights(
    shape: TreeShape,
    probs: BranchingProbabilities,
    center: CenteringMeasure,
    x: np.ndarray,
) -> np.ndarray:
    """sum_m log Y_{m, j_m(x)} for each row of x; -inf on a zero branch.

    This is the evaluation workhorse shared by density computation and
    every MH target in the sampler.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    u = std_normal_cdf(x - center.mu)
    total = np.zeros(x.shape[0])
    with np.errstate(divide="ignore"):
        for m in range(1, shape.M + 1):
            scale = 2**m
            j = np.clip(np.ceil(scale * u).astype(np.int64), 1, scale)
            parent = (j + 1) // 2
            child_bits = j - 2 * parent + 1
            rows = _flat_offsets(parent - 1, scale // 2)
            cols = _flat_offsets(child_bits, 2)
            total += np.log(probs.levels[m - 1][rows, cols])
    return total


def tree_density(
    shape: TreeShape,
    probs: BranchingProbabilities,
    center: CenteringMeasure,
    x: np.ndarray,
) -> float:
    """Finite-tree density: {prod_m Y_{m,j_m(x)}} * 2^(k*M) * f0(x)."""
    x = np.asarray(x, dtype=float)
    logw = tree_log_weights(shape, probs, center, x)[0]
    if not np.isfinite(logw):
        return 0.0
    log_f0 = center.log_density(x)
    return float(np.exp(logw + shape.k * shape.M * np.log(2.0) + log_f0))


def group_children(values: np.ndarray, parent_level: int, k: int) -> np.ndarray:
    """Regroup a level-(m+1) flat array into per-parent child vectors.

    Returns shape (2^(k*m), 2^k) with rows in parent storage order and
    columns in child-bit order, matching the Y layout.
    """
    m = parent_level
    paired = values.reshape((2**m, 2) * k)
    order = tuple(range(0, 2 * k, 2)) + tuple(range(1, 2 * k, 2))
    return paired.transpose(order).reshape(2 ** (k * m), 2**k)


def level_log_sums(probs: BranchingProbabilities, skip_frozen: bool = True) -> list[float | None]:
    """Per-level sum of log Y entries; None for a skipped frozen root.

    The sums are the only data-dependent piece of the Dirichlet prior
    log density, so precomputing them makes repeated evaluation at
    different alpha values cheap.
    """
    sums: list[float | None] = []
    with np.errstate(divide="ignore"):
        for m, lv in enumerate(probs.levels):
            if m == 0 and probs.frozen_root and skip_frozen:
                sums.append(None)
            else:
                sums.append(float(np.sum(np.log(lv))))
    return sums


def log_prior_density_Y(shape: TreeShape, probs: BranchingProbabilities) -> float:
    """Joint log Dirichlet prior density of all (unfrozen) Y vectors.

    A Y entry exactly 0 or 1 yields -inf unless the symmetric Dirichlet
    parameter is exactly 1 (uniform case), in which case the entry
    contributes nothing.  Parameters below 1 would make the density
    diverge at the boundary; the -inf convention treats such boundary
    states as unreachable rather than favored.
    """
    return _log_prior_density_from_sums(shape, level_log_sums(probs))


def _log_prior_density_from_sums(
    shape: TreeShape,
    sums: list[float | None],
    alpha: float | None = None,
) -> float:
    a = shape.alpha if alpha is None else alpha
    fanout = shape.fanout
    total = 0.0
    for m, s in enumerate(sums):
        if s is None:
            continue
        a_m = a * (m + 1) ** shape.delta
        n_nodes = shape.nodes_at(m)
        norm = log_gamma(fanout * a_m) - fanout * log_gamma(a_m)
        if not np.isfinite(s):
            if a_m == 1.0:
                total += n_nodes * norm
                continue
            return -np.inf
        total += n_nodes * norm + (a_m - 1.0) * s
    return float(total)
