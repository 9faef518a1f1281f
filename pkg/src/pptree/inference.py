"""Data-augmented Gibbs sampler for the projected tree model.

Each observation contributes a latent resultant length r_i; given the
resultants the Cartesian points are known and the branching
probabilities are conjugate (Dirichlet plus counts).  Resultants, the
precision alpha, and regression coefficients move by random-walk MH;
the centering location mu is conjugate normal.  One sweep runs in the
fixed order counts, Y, every r_i, alpha, then mu or Gamma.

All MH work is done in log space.  A chain owns a single generator, so
a run is reproducible from (seed, configuration) alone.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import logsumexp

from pptree.geometry import unit_vector
from pptree.numerics import log_gamma
from pptree.polya_tree import (
    BranchingProbabilities,
    CenteringMeasure,
    TreeShape,
    group_children,
    level_alpha,
    level_log_sums,
    locate_indices,
    sample_prior,
    tree_log_weights,
    _flat_offsets,
    _log_prior_density_from_sums,
)
from pptree.projected_density import QuadratureRule

__all__ = [
    "AcceptanceLog",
    "ChainConfig",
    "ChainDivergenceError",
    "ChainResult",
    "CountTensor",
    "DirectionalData",
    "LpmlResult",
    "McmcState",
    "PriorHyperparams",
    "alpha_log_acceptance",
    "compute_counts",
    "gibbs_sweep",
    "initialize_state",
    "lpml",
    "r_log_acceptance",
    "run_chain",
    "update_Y",
    "update_alpha",
    "update_gamma",
    "update_mu",
    "update_r_i",
]

_LIKE_FLOOR_LOG = -700.0


class ChainDivergenceError(RuntimeError):
    """The sampler produced a non-finite state; aborting with context."""


@dataclass(frozen=True)
class PriorHyperparams:
    """Fixed prior constants: Ga(a, b) for alpha, N(mu0, tau_mu) per mu
    coordinate, N(0, tau_gamma) per regression coefficient."""

    a_alpha: float = 1.0
    b_alpha: float = 2.0
    mu0: float = 0.0
    tau_mu: float = 1.0
    tau_gamma: float = 0.1

    def __post_init__(self) -> None:
        if min(self.a_alpha, self.b_alpha, self.tau_mu, self.tau_gamma) <= 0:
            raise ValueError("gamma parameters and precisions must be positive")


@dataclass(frozen=True)
class ChainConfig:
    """Run length, MH tuning constants, seed, and quadrature resolution."""

    iterations: int
    burn_in: int
    thin: int = 1
    kappa_r: float = 0.5
    kappa_alpha: float = 10.0
    kappa_gamma: float = 50.0
    seed: int = 0
    quad_points: int = 100

    def __post_init__(self) -> None:
        if not (0 <= self.burn_in < self.iterations):
            raise ValueError("need 0 <= burn_in < iterations")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if min(self.kappa_r, self.kappa_alpha, self.kappa_gamma) <= 0:
            raise ValueError("MH tuning constants must be positive")
        if self.quad_points < 2:
            raise ValueError("quadrature needs at least 2 nodes")

    @property
    def retained(self) -> int:
        return (self.iterations - self.burn_in) // self.thin


@dataclass(frozen=True)
class DirectionalData:
    """Observed angle vectors in H and optional linear covariates."""

    angles: np.ndarray
    covariates: np.ndarray | None = None

    def __post_init__(self) -> None:
        angles = np.atleast_2d(np.asarray(self.angles, dtype=float))
        object.__setattr__(self, "angles", angles)
        if self.covariates is not None:
            Z = np.atleast_2d(np.asarray(self.covariates, dtype=float))
            if Z.shape[0] != angles.shape[0]:
                raise ValueError("covariate rows must match angle rows")
            object.__setattr__(self, "covariates", Z)

    @property
    def n(self) -> int:
        return self.angles.shape[0]

    @property
    def regression(self) -> bool:
        return self.covariates is not None


@dataclass
class McmcState:
    """Latent state advanced by one Gibbs sweep.

    Under regression ``gamma`` is a (k, p) matrix, mu is identically
    zero, and the level-0 branching vector is frozen at uniform.
    """

    probs: BranchingProbabilities
    r: np.ndarray
    alpha: float
    mu: np.ndarray
    gamma: np.ndarray | None = None

    def copy(self) -> "McmcState":
        return McmcState(
            probs=self.probs.copy(),
            r=self.r.copy(),
            alpha=self.alpha,
            mu=self.mu.copy(),
            gamma=None if self.gamma is None else self.gamma.copy(),
        )

    def is_finite(self) -> bool:
        parts = [self.r, self.mu, np.asarray(self.alpha)]
        if self.gamma is not None:
            parts.append(self.gamma)
        return all(np.all(np.isfinite(p)) for p in parts) and all(
            np.all(np.isfinite(lv)) for lv in self.probs.levels
        )


@dataclass
class CountTensor:
    """Per-level occupancy counts N_{m,j}; ``levels[m-1]`` is level m."""

    levels: list[np.ndarray]

    def total(self) -> int:
        return int(self.levels[0].sum()) if self.levels else 0


@dataclass
class AcceptanceLog:
    """Proposal/acceptance tallies per MH update family."""

    proposals: dict[str, int] = field(default_factory=lambda: {"r": 0, "alpha": 0, "gamma": 0})
    acceptances: dict[str, int] = field(default_factory=lambda: {"r": 0, "alpha": 0, "gamma": 0})

    def record(self, family: str, proposed: int, accepted: int) -> None:
        self.proposals[family] += proposed
        self.acceptances[family] += accepted

    def rate(self, family: str) -> float:
        p = self.proposals[family]
        return self.acceptances[family] / p if p else float("nan")


def _shifts(state: McmcState, data: DirectionalData, k: int) -> np.ndarray:
    if state.gamma is None:
        return np.zeros((data.n, k))
    return data.covariates @ state.gamma.T


def _augmented_points(state: McmcState, units: np.ndarray, shifts: np.ndarray) -> np.ndarray:
    """Cartesian points x_i = r_i u_i minus the regression shift."""
    return state.r[:, None] * units - shifts


def compute_counts(
    shape: TreeShape,
    center: CenteringMeasure,
    angles: np.ndarray,
    state: McmcState,
    covariates: np.ndarray | None = None,
) -> CountTensor:
    """Occupancy counts of the augmented points at every level 1..M."""
    data = DirectionalData(angles=angles, covariates=covariates)
    units = unit_vector(data.angles)
    pts = _augmented_points(state, np.atleast_2d(units), _shifts(state, data, shape.k))
    levels = []
    for m in range(1, shape.M + 1):
        j = locate_indices(center, pts, m)
        flat = _flat_offsets(j - 1, 2**m)
        levels.append(np.bincount(flat, minlength=shape.nodes_at(m)).astype(np.int64))
    return CountTensor(levels=levels)


def update_Y(
    shape: TreeShape,
    counts: CountTensor,
    rng: np.random.Generator,
    frozen_root: bool = False,
) -> BranchingProbabilities:
    """Conjugate Dirichlet draw per internal node: prior parameters plus
    the node's child counts.  The frozen root keeps its uniform vector
    and consumes no randomness."""
    levels: list[np.ndarray] = []
    for m in range(shape.M):
        if m == 0 and frozen_root:
            levels.append(np.full((1, shape.fanout), 1.0 / shape.fanout))
            continue
        params = level_alpha(shape, m) + group_children(counts.levels[m], m, shape.k)
        draws = rng.gamma(params)
        totals = draws.sum(axis=1, keepdims=True)
        bad = totals[:, 0] <= 0.0
        if np.any(bad):
            draws[bad] = np.maximum(draws[bad], np.finfo(float).tiny)
            totals = draws.sum(axis=1, keepdims=True)
        levels.append(draws / totals)
    return BranchingProbabilities(levels=levels, frozen_root=frozen_root)


def _log_gamma_pdf(x: float, a: float, rate: float) -> float:
    if x <= 0 or rate <= 0:
        return -np.inf
    return a * np.log(rate) - log_gamma(a) + (a - 1.0) * np.log(x) - rate * x


def _r_log_target(
    r,
    unit: np.ndarray,
    shift: np.ndarray,
    shape: TreeShape,
    probs: BranchingProbabilities,
    center: CenteringMeasure,
) -> np.ndarray:
    """log f(r | Y, theta) up to a constant: tree weight + f0 + r^(k-1)."""
    r = np.atleast_1d(np.asarray(r, dtype=float))
    pts = r[:, None] * unit - shift
    with np.errstate(divide="ignore"):
        return (
            tree_log_weights(shape, probs, center, pts)
            + center.log_density(pts)
            + (shape.k - 1) * np.log(r)
        )


def r_log_acceptance(
    r_cur: float,
    r_prop: float,
    unit: np.ndarray,
    shift: np.ndarray,
    shape: TreeShape,
    probs: BranchingProbabilities,
    center: CenteringMeasure,
    kappa_r: float,
) -> float:
    """Log MH ratio for the resultant update (before truncation at 0)."""
    if r_prop <= 0:
        return -np.inf
    lt = _r_log_target(np.array([r_cur, r_prop]), unit, shift, shape, probs, center)
    if not np.isfinite(lt[1]):
        return -np.inf
    forward = _log_gamma_pdf(r_prop, kappa_r, kappa_r / r_cur)
    backward = _log_gamma_pdf(r_cur, kappa_r, kappa_r / r_prop)
    return float(lt[1] - lt[0] + backward - forward)


def update_r_i(
    shape: TreeShape,
    probs: BranchingProbabilities,
    center: CenteringMeasure,
    theta_i: np.ndarray,
    r_i: float,
    config: ChainConfig,
    rng: np.random.Generator,
    shift: np.ndarray | None = None,
) -> tuple[float, bool]:
    """One MH step for a single latent resultant."""
    k = shape.k
    shift = np.zeros(k) if shift is None else shift
    unit = unit_vector(np.asarray(theta_i, dtype=float))
    kappa = config.kappa_r
    r_prop = float(rng.gamma(kappa, r_i / kappa))
    log_acc = r_log_acceptance(r_i, r_prop, unit, shift, shape, probs, center, kappa)
    if np.log(rng.uniform()) < min(0.0, log_acc):
        return r_prop, True
    return r_i, False


def _update_r_all(
    shape: TreeShape,
    state: McmcState,
    units: np.ndarray,
    shifts: np.ndarray,
    center: CenteringMeasure,
    config: ChainConfig,
    rng: np.random.Generator,
) -> int:
    """Vectorized pass over all conditionally independent r_i updates."""
    n = state.r.size
    kappa = config.kappa_r
    r_cur = state.r
    r_prop = rng.gamma(kappa, r_cur / kappa)
    pts_cur = r_cur[:, None] * units - shifts
    pts_prop = r_prop[:, None] * units - shifts
    with np.errstate(divide="ignore", invalid="ignore"):
        lt_cur = (
            tree_log_weights(shape, state.probs, center, pts_cur)
            + center.log_density(pts_cur)
            + (shape.k - 1) * np.log(r_cur)
        )
        lt_prop = (
            tree_log_weights(shape, state.probs, center, pts_prop)
            + center.log_density(pts_prop)
            + (shape.k - 1) * np.log(r_prop)
        )
        rate_fwd = kappa / r_cur
        rate_bwd = kappa / r_prop
        log_fwd = kappa * np.log(rate_fwd) + (kappa - 1.0) * np.log(r_prop) - rate_fwd * r_prop
        log_bwd = kappa * np.log(rate_bwd) + (kappa - 1.0) * np.log(r_cur) - rate_bwd * r_cur
        log_acc = lt_prop - lt_cur + log_bwd - log_fwd
    valid = (r_prop > 0) & np.isfinite(lt_prop)
    log_acc = np.where(valid, log_acc, -np.inf)
    accept = np.log(rng.uniform(size=n)) < np.minimum(0.0, log_acc)
    state.r = np.where(accept, r_prop, r_cur)
    return int(accept.sum())


def alpha_log_acceptance(
    alpha_cur: float,
    alpha_prop: float,
    shape: TreeShape,
    probs: BranchingProbabilities,
    hyper: PriorHyperparams,
    kappa_alpha: float,
) -> float:
    """Log MH ratio for the precision update (before truncation)."""
    if alpha_prop <= 0:
        return -np.inf
    sums = level_log_sums(probs)
    lt_cur = _log_prior_density_from_sums(shape, sums, alpha=alpha_cur) + _log_gamma_pdf(
        alpha_cur, hyper.a_alpha, hyper.b_alpha
    )
    lt_prop = _log_prior_density_from_sums(shape, sums, alpha=alpha_prop) + _log_gamma_pdf(
        alpha_prop, hyper.a_alpha, hyper.b_alpha
    )
    if not np.isfinite(lt_prop):
        return -np.inf
    forward = _log_gamma_pdf(alpha_prop, kappa_alpha, kappa_alpha / alpha_cur)
    backward = _log_gamma_pdf(alpha_cur, kappa_alpha, kappa_alpha / alpha_prop)
    return float(lt_prop - lt_cur + backward - forward)


def update_alpha(
    state: McmcState,
    shape: TreeShape,
    hyper: PriorHyperparams,
    config: ChainConfig,
    rng: np.random.Generator,
) -> tuple[float, bool]:
    """One MH step for the tree precision alpha."""
    kappa = config.kappa_alpha
    prop = float(rng.gamma(kappa, state.alpha / kappa))
    log_acc = alpha_log_acceptance(state.alpha, prop, shape, state.probs, hyper, kappa)
    if np.log(rng.uniform()) < min(0.0, log_acc):
        return prop, True
    return state.alpha, False


def update_mu(
    state: McmcState,
    angles: np.ndarray,
    rng: np.random.Generator,
    hyper: PriorHyperparams,
) -> np.ndarray:
    """Exact conjugate draw for each centering coordinate.

    Posterior is N((n xbar_l + tau_mu mu0) / (n + tau_mu), n + tau_mu)
    with xbar the mean of the current augmented Cartesian coordinates.
    """
    if state.gamma is not None:
        raise ValueError("mu is fixed at zero when regression is active")
    angles = np.atleast_2d(np.asarray(angles, dtype=float))
    n = angles.shape[0]
    k = state.mu.size
    if n == 0:
        xbar = np.zeros(k)
    else:
        xbar = (state.r[:, None] * np.atleast_2d(unit_vector(angles))).mean(axis=0)
    precision = n + hyper.tau_mu
    mean = (n * xbar + hyper.tau_mu * hyper.mu0) / precision
    return mean + rng.standard_normal(k) / np.sqrt(precision)


def _log_normal_pdf(x: float, mean: float, precision: float) -> float:
    return 0.5 * (np.log(precision) - np.log(2.0 * np.pi)) - 0.5 * precision * (x - mean) ** 2


def update_gamma(
    state: McmcState,
    data: DirectionalData,
    shape: TreeShape,
    config: ChainConfig,
    hyper: PriorHyperparams,
    rng: np.random.Generator,
    center: CenteringMeasure,
) -> tuple[np.ndarray, int]:
    """One-at-a-time MH over the coefficient entries, row-major order.

    The normal random-walk proposal (precision kappa_gamma) is
    symmetric, so the acceptance ratio is the target ratio alone: the
    coefficient prior times the tree likelihood of the shifted
    residuals eps_i = x_i - Gamma z_i.
    """
    if state.gamma is None:
        raise ValueError("regression coefficients are absent from the state")
    gamma = state.gamma.copy()
    Z = data.covariates
    units = np.atleast_2d(unit_vector(data.angles))
    X = state.r[:, None] * units
    eps = X - Z @ gamma.T
    step = 1.0 / np.sqrt(config.kappa_gamma)

    def residual_loglik(e: np.ndarray) -> float:
        return float(
            np.sum(tree_log_weights(shape, state.probs, center, e))
            + np.sum(center.log_density(e))
        )

    current_ll = residual_loglik(eps)
    accepted = 0
    k, p = gamma.shape
    for l in range(k):
        for h in range(p):
            prop = gamma[l, h] + step * rng.standard_normal()
            eps_prop = eps.copy()
            eps_prop[:, l] -= Z[:, h] * (prop - gamma[l, h])
            prop_ll = residual_loglik(eps_prop)
            log_acc = (
                prop_ll
                - current_ll
                + _log_normal_pdf(prop, 0.0, hyper.tau_gamma)
                - _log_normal_pdf(gamma[l, h], 0.0, hyper.tau_gamma)
            )
            if np.isfinite(prop_ll) and np.log(rng.uniform()) < min(0.0, log_acc):
                gamma[l, h] = prop
                eps = eps_prop
                current_ll = prop_ll
                accepted += 1
    return gamma, accepted


def initialize_state(
    data: DirectionalData,
    shape: TreeShape,
    hyper: PriorHyperparams,
    config: ChainConfig,
    rng: np.random.Generator,
) -> McmcState:
    """Neutral prior-centered starting point: unit resultants, a prior
    tree draw, alpha at its prior mean, mu at mu0 (zero under
    regression), Gamma at zero."""
    n = data.n
    regression = data.regression
    alpha0 = hyper.a_alpha / hyper.b_alpha
    probs = sample_prior(replace(shape, alpha=alpha0), rng, frozen_root=regression)
    mu = np.zeros(shape.k) if regression else np.full(shape.k, hyper.mu0)
    gamma = np.zeros((shape.k, data.covariates.shape[1])) if regression else None
    return McmcState(probs=probs, r=np.ones(n), alpha=alpha0, mu=mu, gamma=gamma)


def gibbs_sweep(
    state: McmcState,
    data: DirectionalData,
    config: ChainConfig,
    hyper: PriorHyperparams,
    shape: TreeShape,
    rng: np.random.Generator,
    log: AcceptanceLog | None = None,
) -> McmcState:
    """One full sweep, mutating ``state`` in place and returning it."""
    log = log if log is not None else AcceptanceLog()
    center = CenteringMeasure(state.mu)
    # Y updates condition on the current sampled precision, not the
    # shape's initial value.
    shape_now = replace(shape, alpha=state.alpha)
    counts = compute_counts(shape, center, data.angles, state, data.covariates)
    state.probs = update_Y(shape_now, counts, rng, frozen_root=state.probs.frozen_root)
    units = np.atleast_2d(unit_vector(data.angles))
    shifts = _shifts(state, data, shape.k)
    accepted_r = _update_r_all(shape, state, units, shifts, center, config, rng)
    log.record("r", data.n, accepted_r)
    state.alpha, acc_a = update_alpha(state, shape, hyper, config, rng)
    log.record("alpha", 1, int(acc_a))
    if data.regression:
        gamma, acc_g = update_gamma(state, data, shape, config, hyper, rng, center)
        log.record("gamma", gamma.size, acc_g)
        state.gamma = gamma
    else:
        state.mu = update_mu(state, data.angles, rng, hyper)
    return state


def observation_likelihoods(
    shape: TreeShape,
    state: McmcState,
    data: DirectionalData,
    quad_points: int,
) -> np.ndarray:
    """f(theta_i | state) for every observation, by the shared quadrature.

    Uses the same right-endpoint rule and upper-limit convention as
    density output: r_max = ||mu|| + 4, or the largest shifted norm
    plus 4 under regression.
    """
    from pptree.projected_density import _batch_density

    center = CenteringMeasure(state.mu)
    if data.regression:
        quad = QuadratureRule.for_regression(quad_points, state.gamma, data.covariates)
        shifts = data.covariates @ state.gamma.T
    else:
        quad = QuadratureRule.for_center(quad_points, state.mu)
        shifts = np.zeros((data.n, shape.k))
    return _batch_density(shape, state.probs, center, quad, data.angles, shifts)


@dataclass
class ChainResult:
    """Retained snapshots plus bookkeeping from one chain run."""

    states: list[McmcState]
    iterations: np.ndarray
    acceptance: AcceptanceLog
    likelihoods: np.ndarray

    @property
    def retained(self) -> int:
        return len(self.states)


def run_chain(
    data: DirectionalData,
    config: ChainConfig,
    hyper: PriorHyperparams,
    shape: TreeShape,
    rng: np.random.Generator | None = None,
) -> ChainResult:
    """Run the Gibbs sampler, discarding burn-in and thinning.

    Keeps every ``thin``-th post-burn-in sweep, so the retained count
    is exactly floor((iterations - burn_in) / thin).  For each retained
    state the per-observation likelihood row used by LPML is evaluated
    immediately.
    """
    if rng is None:
        rng = np.random.default_rng(config.seed)
    _validate_angles(data.angles, shape.k)
    if data.regression and np.any(np.all(data.covariates == 0.0, axis=0)):
        raise ValueError("a covariate column is identically zero")
    log = AcceptanceLog()
    state = initialize_state(data, shape, hyper, config, rng)
    states: list[McmcState] = []
    its: list[int] = []
    like_rows: list[np.ndarray] = []
    for it in range(config.iterations):
        gibbs_sweep(state, data, config, hyper, shape, rng, log)
        if it >= config.burn_in and (it - config.burn_in) % config.thin == config.thin - 1:
            if not state.is_finite():
                raise ChainDivergenceError(f"non-finite state at sweep {it}")
            states.append(state.copy())
            its.append(it)
            like_rows.append(observation_likelihoods(shape, state, data, config.quad_points))
    return ChainResult(
        states=states,
        iterations=np.asarray(its, dtype=np.int64),
        acceptance=log,
        likelihoods=np.asarray(like_rows) if like_rows else np.empty((0, data.n)),
    )


def _validate_angles(angles: np.ndarray, k: int) -> None:
    if angles.shape[1] != k - 1:
        raise ValueError(f"expected {k - 1} angle columns, got {angles.shape[1]}")
    colat = angles[:, : k - 2]
    if np.any(colat < 0) or np.any(colat > np.pi):
        raise ValueError("a colatitude lies outside [0, pi]")
    longitude = angles[:, k - 2]
    if np.any(longitude < 0) or np.any(longitude >= 2.0 * np.pi):
        raise ValueError("the periodic angle must lie in [0, 2*pi)")


@dataclass
class LpmlResult:
    """LPML with per-observation CPO values and stability diagnostics."""

    lpml: float
    cpo: np.ndarray
    floored_values: int = 0
    zero_observations: tuple[int, ...] = ()


def lpml(likelihoods: np.ndarray) -> LpmlResult:
    """Log pseudo marginal likelihood from a (retained x n) likelihood matrix.

    CPO_i is the harmonic mean of f(theta_i | state_t) over retained
    iterations, computed as log T - logsumexp(-log f) for stability.
    Exact zeros make CPO_i = 0 and LPML = -inf, reported with the
    offending observation indices; merely tiny values are floored at
    exp(-700) and counted.
    """
    like = np.asarray(likelihoods, dtype=float)
    if like.ndim != 2 or like.shape[0] == 0:
        raise ValueError("need a non-empty (retained x n) likelihood matrix")
    T, n = like.shape
    zero_obs = tuple(int(i) for i in np.nonzero((like <= 0.0).any(axis=0))[0])
    floor = np.exp(_LIKE_FLOOR_LOG)
    floored = int(np.count_nonzero((like > 0.0) & (like < floor)))
    with np.errstate(divide="ignore"):
        log_like = np.log(np.maximum(like, floor))
    log_cpo = np.log(T) - logsumexp(-log_like, axis=0)
    cpo = np.exp(log_cpo)
    if zero_obs:
        cpo[list(zero_obs)] = 0.0
        return LpmlResult(lpml=-np.inf, cpo=cpo, floored_values=floored, zero_observations=zero_obs)
    return LpmlResult(lpml=float(np.sum(log_cpo)), cpo=cpo, floored_values=floored)
