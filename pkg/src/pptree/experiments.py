"""Experiment drivers and file outputs for the batch front end.

Each run resolves a manifest (model shape, priors, chain tuning, data
spec, output directory), executes, and writes CSV/JSON artifacts plus a
manifest echo sufficient to reproduce the run bit-exactly from the
seed.  Output schemas are plain CSVs consumed by the plotting package:

* grid CSVs: ``theta_1[,theta_2],density`` rows in row-major order
* marginal summaries: ``theta,mean,lower,upper`` (pointwise 95% band)
* prior-path marginals: ``path,theta,density``
* moments: ``iteration|path,nu_1,conc_1[,nu_2,conc_2,rho]``
* traces: ``iteration,alpha,<mu or gamma entries>,acc_r,acc_alpha[,acc_gamma]``
* likelihood matrix: ``iteration,obs_1..obs_n``; CPO: ``observation,cpo``
"""

from __future__ import annotations

import dataclasses
import json
import os
import time
from dataclasses import dataclass

import numpy as np

from pptree import __version__
from pptree.datasets import (
    AngleColumn,
    DatasetSpec,
    dataset_preset,
    load_dataset,
    read_table,
    write_table,
)
from pptree.inference import (
    ChainConfig,
    ChainResult,
    DirectionalData,
    McmcState,
    PriorHyperparams,
    lpml,
    run_chain,
)
from pptree.moments import (
    UndefinedCorrelationError,
    circular_correlation_from_grid,
    mean_direction,
    trig_moment_from_grid,
)
from pptree.numerics import make_rng
from pptree.polya_tree import BranchingProbabilities, CenteringMeasure, TreeShape, sample_prior
from pptree.projected_density import (
    DensityGrid,
    QuadratureRule,
    RegressionContext,
    axis_midpoints,
    joint_grid,
    marginal_density,
    regression_curve,
)

__all__ = [
    "ConfigurationError",
    "RunManifest",
    "load_manifest",
    "recompute_lpml",
    "regrid_from_states",
    "run_fit",
    "run_fit_regression",
    "run_prior_simulation",
]

EXPERIMENT_KINDS = ("prior-sim", "fit", "fit-regression")


class ConfigurationError(ValueError):
    """The manifest is malformed or inconsistent."""


@dataclass
class RunManifest:
    """Resolved configuration for one experiment run."""

    experiment: str
    seed: int
    output_dir: str
    shape: TreeShape
    mu: np.ndarray
    hyper: PriorHyperparams
    chain: ChainConfig
    dataset: DatasetSpec | None = None
    grid_resolution: int = 100
    paths: int = 20

    def __post_init__(self) -> None:
        if self.experiment not in EXPERIMENT_KINDS:
            raise ConfigurationError(f"unknown experiment kind {self.experiment!r}")
        self.mu = np.asarray(self.mu, dtype=float)
        if self.mu.size != self.shape.k:
            raise ConfigurationError("centering location must have k entries")
        if self.experiment != "prior-sim" and self.dataset is None:
            raise ConfigurationError(f"experiment {self.experiment!r} needs a dataset")

    def to_json(self) -> dict:
        doc = {
            "experiment": self.experiment,
            "seed": self.seed,
            "output_dir": self.output_dir,
            "version": __version__,
            "model": {
                "k": self.shape.k,
                "M": self.shape.M,
                "alpha": self.shape.alpha,
                "delta": self.shape.delta,
                "mu": [float(v) for v in self.mu],
            },
            "prior": dataclasses.asdict(self.hyper),
            "chain": dataclasses.asdict(self.chain),
            "grid": {"resolution": self.grid_resolution},
            "paths": self.paths,
        }
        if self.dataset is not None:
            doc["dataset"] = {
                "path": self.dataset.path,
                "delimiter": self.dataset.delimiter,
                "header": self.dataset.header,
                "angles": [dataclasses.asdict(a) for a in self.dataset.angles],
                "covariates": list(self.dataset.covariates),
            }
        return doc


def _dataset_from_json(doc: dict) -> DatasetSpec:
    if "preset" in doc and doc["preset"]:
        spec = dataset_preset(
            doc["preset"], doc["path"], tuple(doc.get("covariates", ()))
        )
        return dataclasses.replace(
            spec,
            delimiter=doc.get("delimiter", "auto"),
            header=doc.get("header", "auto"),
        )
    angles = tuple(
        AngleColumn(
            column=int(a["column"]),
            unit=a.get("unit", "radians"),
            offset=float(a.get("offset", 0.0)),
            scale=float(a.get("scale", 1.0)),
        )
        for a in doc["angles"]
    )
    return DatasetSpec(
        path=doc["path"],
        angles=angles,
        covariates=tuple(int(c) for c in doc.get("covariates", ())),
        delimiter=doc.get("delimiter", "auto"),
        header=doc.get("header", "auto"),
    )


def load_manifest(doc: dict) -> RunManifest:
    """Build a manifest from a parsed JSON document."""
    try:
        model = doc["model"]
        shape = TreeShape(
            k=int(model["k"]),
            M=int(model["M"]),
            alpha=float(model.get("alpha", 1.0)),
            delta=float(model.get("delta", 1.1)),
        )
        prior = doc.get("prior", {})
        hyper = PriorHyperparams(
            a_alpha=float(prior.get("a_alpha", 1.0)),
            b_alpha=float(prior.get("b_alpha", 2.0)),
            mu0=float(prior.get("mu0", 0.0)),
            tau_mu=float(prior.get("tau_mu", 1.0)),
            tau_gamma=float(prior.get("tau_gamma", 0.1)),
        )
        chain_doc = doc.get("chain", {})
        chain = ChainConfig(
            iterations=int(chain_doc.get("iterations", 5500)),
            burn_in=int(chain_doc.get("burn_in", 500)),
            thin=int(chain_doc.get("thin", 5)),
            kappa_r=float(chain_doc.get("kappa_r", 0.5)),
            kappa_alpha=float(chain_doc.get("kappa_alpha", 10.0)),
            kappa_gamma=float(chain_doc.get("kappa_gamma", 50.0)),
            seed=int(doc.get("seed", 0)),
            quad_points=int(chain_doc.get("quad_points", 100)),
        )
        mu = np.asarray(model.get("mu", [0.0] * shape.k), dtype=float)
        dataset = _dataset_from_json(doc["dataset"]) if "dataset" in doc else None
        return RunManifest(
            experiment=doc["experiment"],
            seed=int(doc.get("seed", 0)),
            output_dir=doc.get("output_dir", "."),
            shape=shape,
            mu=mu,
            hyper=hyper,
            chain=chain,
            dataset=dataset,
            grid_resolution=int(doc.get("grid", {}).get("resolution", 100)),
            paths=int(doc.get("paths", 20)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigurationError):
            raise
        raise ConfigurationError(f"bad manifest: {exc}") from exc


def _write_manifest_echo(manifest: RunManifest) -> None:
    path = os.path.join(manifest.output_dir, "manifest.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _grid_csv(grid: DensityGrid, path: str) -> None:
    mesh = np.meshgrid(*grid.axes, indexing="ij")
    cols = {f"theta_{c + 1}": m.ravel() for c, m in zip(grid.free_coords, mesh)}
    cols["density"] = grid.values.ravel()
    write_table(path, cols)


def grid_from_csv(path: str, k: int) -> DensityGrid:
    """Rebuild a DensityGrid from its CSV emission."""
    table = read_table(path)
    coord_names = [n for n in table if n != "density"]
    axes = [np.unique(table[n]) for n in coord_names]
    shape_ = tuple(len(a) for a in axes)
    values = table["density"].reshape(shape_)
    free = tuple(int(n.split("_")[1]) - 1 for n in coord_names)
    return DensityGrid(axes=axes, values=values, k=k, free_coords=free)


def _normalized(grid: DensityGrid) -> DensityGrid:
    out = grid.copy()
    out.values /= out.total_mass()
    return out


def _grid_moments(grid: DensityGrid) -> dict[str, float]:
    """nu/concentration per free coordinate, and rho for 2-D grids.

    Grids are renormalized first so coarse-resolution discretization
    error never trips the moment routines' unit-mass contract.
    """
    grid = _normalized(grid)
    out: dict[str, float] = {}
    for coord in grid.free_coords:
        marg = marginal_density(grid, coord) if len(grid.free_coords) > 1 else grid
        summary = mean_direction(trig_moment_from_grid(_normalized(marg), 1))
        out[f"nu_{coord + 1}"] = summary.nu
        out[f"conc_{coord + 1}"] = summary.rho_conc
    if len(grid.free_coords) == 2:
        try:
            out["rho"] = circular_correlation_from_grid(grid)
        except UndefinedCorrelationError:
            out["rho"] = float("nan")
    return out


def run_prior_simulation(manifest: RunManifest) -> dict:
    """Sample prior paths and write their grids and moment table."""
    os.makedirs(manifest.output_dir, exist_ok=True)
    rng = make_rng(manifest.seed)
    shape = manifest.shape
    center = CenteringMeasure(manifest.mu)
    quad = QuadratureRule.for_center(manifest.chain.quad_points, manifest.mu)
    res = manifest.grid_resolution

    marginal_rows: dict[int, list[np.ndarray]] = {c: [] for c in range(shape.k - 1)}
    moment_rows: list[dict[str, float]] = []
    t0 = time.perf_counter()
    for p in range(manifest.paths):
        probs = sample_prior(shape, rng)
        grid = joint_grid(shape, probs, center, quad, resolution=res)
        _grid_csv(grid, os.path.join(manifest.output_dir, f"joint_path{p:03d}.csv"))
        for coord in grid.free_coords:
            marg = marginal_density(grid, coord) if shape.k > 2 else grid
            marginal_rows[coord].append(marg.values)
        moment_rows.append({"path": float(p), **_grid_moments(grid)})

    for coord in range(shape.k - 1):
        axis = axis_midpoints(coord, shape.k, res)
        stacked = np.vstack(marginal_rows[coord])
        write_table(
            os.path.join(manifest.output_dir, f"marginal_theta{coord + 1}.csv"),
            {
                "path": np.repeat(np.arange(manifest.paths), axis.size),
                "theta": np.tile(axis, manifest.paths),
                "density": stacked.ravel(),
            },
        )
    write_table(
        os.path.join(manifest.output_dir, "moments.csv"),
        {key: np.array([row[key] for row in moment_rows]) for key in moment_rows[0]},
    )
    _write_manifest_echo(manifest)
    summary = {
        "experiment": manifest.experiment,
        "paths": manifest.paths,
        "wall_time_s": time.perf_counter() - t0,
    }
    _write_summary(manifest, summary)
    return summary


def _write_summary(manifest: RunManifest, summary: dict) -> None:
    with open(os.path.join(manifest.output_dir, "summary.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True, default=float)
        fh.write("\n")


def _credible(samples: np.ndarray) -> list[float]:
    return [float(v) for v in np.percentile(samples, [2.5, 97.5])]


def _echo_data(manifest: RunManifest, data: DirectionalData) -> None:
    cols = {
        f"theta_{i + 1}": data.angles[:, i] for i in range(data.angles.shape[1])
    }
    if data.covariates is not None:
        for j in range(data.covariates.shape[1]):
            cols[f"z_{j + 1}"] = data.covariates[:, j]
    write_table(os.path.join(manifest.output_dir, "data_used.csv"), cols)


def _save_states(manifest: RunManifest, result: ChainResult) -> None:
    arrays: dict[str, np.ndarray] = {
        "iterations": result.iterations,
        "r": np.vstack([s.r for s in result.states]),
        "alpha": np.array([s.alpha for s in result.states]),
        "mu": np.vstack([s.mu for s in result.states]),
    }
    depth = result.states[0].probs.depth
    for m in range(depth):
        arrays[f"Y_level{m}"] = np.stack([s.probs.levels[m] for s in result.states])
    arrays["frozen_root"] = np.array(result.states[0].probs.frozen_root)
    if result.states[0].gamma is not None:
        arrays["gamma"] = np.stack([s.gamma for s in result.states])
    np.savez_compressed(os.path.join(manifest.output_dir, "states.npz"), **arrays)


def load_states(path: str) -> list[McmcState]:
    """Rebuild retained states from a states.npz archive."""
    with np.load(path) as archive:
        n_ret = archive["alpha"].size
        frozen = bool(archive["frozen_root"])
        depth = sum(1 for key in archive.files if key.startswith("Y_level"))
        has_gamma = "gamma" in archive.files
        states = []
        for t in range(n_ret):
            probs = BranchingProbabilities(
                levels=[archive[f"Y_level{m}"][t] for m in range(depth)],
                frozen_root=frozen,
            )
            states.append(
                McmcState(
                    probs=probs,
                    r=archive["r"][t],
                    alpha=float(archive["alpha"][t]),
                    mu=archive["mu"][t],
                    gamma=archive["gamma"][t] if has_gamma else None,
                )
            )
    return states


def _write_traces(manifest: RunManifest, result: ChainResult) -> None:
    cols: dict[str, np.ndarray] = {
        "iteration": result.iterations,
        "alpha": np.array([s.alpha for s in result.states]),
    }
    first = result.states[0]
    if first.gamma is None:
        mus = np.vstack([s.mu for s in result.states])
        for l in range(mus.shape[1]):
            cols[f"mu_{l + 1}"] = mus[:, l]
    else:
        gammas = np.stack([s.gamma for s in result.states])
        k, p = first.gamma.shape
        for l in range(k):
            for h in range(p):
                cols[f"gamma_{l + 1}_{h + 1}"] = gammas[:, l, h]
    acc = result.acceptance
    n_ret = len(result.states)
    cols["acc_r"] = np.full(n_ret, acc.rate("r"))
    cols["acc_alpha"] = np.full(n_ret, acc.rate("alpha"))
    if first.gamma is not None:
        cols["acc_gamma"] = np.full(n_ret, acc.rate("gamma"))
    write_table(os.path.join(manifest.output_dir, "trace.csv"), cols)


def _write_likelihoods(manifest: RunManifest, result: ChainResult) -> None:
    cols: dict[str, np.ndarray] = {"iteration": result.iterations}
    for i in range(result.likelihoods.shape[1]):
        cols[f"obs_{i + 1}"] = result.likelihoods[:, i]
    write_table(os.path.join(manifest.output_dir, "likelihood.csv"), cols)


def _state_joint_grid(
    shape: TreeShape,
    state: McmcState,
    resolution: int,
    quad_points: int,
    profile: np.ndarray | None = None,
) -> DensityGrid:
    if state.gamma is not None:
        if profile is None:
            raise ValueError("regression states need a covariate profile")
        center = CenteringMeasure(np.zeros(shape.k))
        quad = QuadratureRule.for_regression(quad_points, state.gamma, profile[None, :])
        reg = RegressionContext(gamma=state.gamma, z=profile, active=True)
        return joint_grid(shape, state.probs, center, quad, resolution, reg)
    center = CenteringMeasure(state.mu)
    quad = QuadratureRule.for_center(quad_points, state.mu)
    return joint_grid(shape, state.probs, center, quad, resolution)


def _postprocess_fit(
    manifest: RunManifest, states: list[McmcState], profile: np.ndarray | None = None
) -> tuple[DensityGrid, dict]:
    """Per-state grids -> mean joint, marginal bands, moment samples.

    Returns the posterior-mean joint grid and a summary fragment;
    writes the marginal band CSVs and the moments CSV.
    """
    shape = manifest.shape
    res = manifest.grid_resolution
    tag = "" if profile is None else f"_profile{int(profile.argmax()) + 1}"
    mean_values: np.ndarray | None = None
    marginals: dict[int, list[np.ndarray]] = {c: [] for c in range(shape.k - 1)}
    moment_rows: list[dict[str, float]] = []
    template: DensityGrid | None = None
    for state in states:
        grid = _state_joint_grid(shape, state, res, manifest.chain.quad_points, profile)
        template = grid
        mean_values = grid.values if mean_values is None else mean_values + grid.values
        for coord in grid.free_coords:
            marg = marginal_density(grid, coord) if shape.k > 2 else grid
            marginals[coord].append(marg.values)
        moment_rows.append(_grid_moments(grid))
    mean_grid = DensityGrid(
        axes=[a.copy() for a in template.axes],
        values=mean_values / len(states),
        k=shape.k,
        free_coords=template.free_coords,
    )
    _grid_csv(mean_grid, os.path.join(manifest.output_dir, f"joint_mean{tag}.csv"))

    for coord in range(shape.k - 1):
        stacked = np.vstack(marginals[coord])
        axis = axis_midpoints(coord, shape.k, res)
        write_table(
            os.path.join(manifest.output_dir, f"marginal_theta{coord + 1}{tag}.csv"),
            {
                "theta": axis,
                "mean": stacked.mean(axis=0),
                "lower": np.percentile(stacked, 2.5, axis=0),
                "upper": np.percentile(stacked, 97.5, axis=0),
            },
        )
    moment_cols = {
        "iteration": np.arange(len(states), dtype=np.int64),
    }
    for key in moment_rows[0]:
        moment_cols[key] = np.array([row[key] for row in moment_rows])
    write_table(os.path.join(manifest.output_dir, f"moments{tag}.csv"), moment_cols)

    fragment: dict = {}
    if shape.k == 3:
        rhos = np.array([row["rho"] for row in moment_rows])
        rhos = rhos[np.isfinite(rhos)]
        if rhos.size:
            fragment["rho"] = {
                "mean": float(rhos.mean()),
                "ci95": _credible(rhos),
                "prob_positive": float(np.mean(rhos > 0)),
            }
        curves = {
            "curve_theta1_given_theta2": regression_curve(mean_grid, 0, 1),
            "curve_theta2_given_theta1": regression_curve(mean_grid, 1, 0),
        }
        for name, curve in curves.items():
            write_table(
                os.path.join(manifest.output_dir, f"{name}{tag}.csv"),
                {
                    "conditioning": curve.conditioning_values,
                    "mean": curve.conditional_means,
                    "concentration": curve.concentrations,
                    "defined": curve.defined.astype(np.int64),
                },
            )
    return mean_grid, fragment


def run_fit(manifest: RunManifest) -> dict:
    """Posterior analysis without covariates."""
    os.makedirs(manifest.output_dir, exist_ok=True)
    data, report = load_dataset(manifest.dataset)
    if data.regression:
        data = DirectionalData(angles=data.angles)  # covariates ignored in plain fits
    t0 = time.perf_counter()
    result = run_chain(data, manifest.chain, manifest.hyper, manifest.shape)
    _echo_data(manifest, data)
    _write_traces(manifest, result)
    _write_likelihoods(manifest, result)
    _save_states(manifest, result)
    score = lpml(result.likelihoods)
    write_table(
        os.path.join(manifest.output_dir, "cpo.csv"),
        {"observation": np.arange(1, data.n + 1), "cpo": score.cpo},
    )
    _, fragment = _postprocess_fit(manifest, result.states)
    alphas = np.array([s.alpha for s in result.states])
    mus = np.vstack([s.mu for s in result.states])
    summary = {
        "experiment": manifest.experiment,
        "n": data.n,
        "rows_rejected": report.missing_rows,
        "retained": result.retained,
        "lpml": score.lpml,
        "lpml_floored_values": score.floored_values,
        "acceptance": {
            "r": result.acceptance.rate("r"),
            "alpha": result.acceptance.rate("alpha"),
        },
        "alpha_ci95": _credible(alphas),
        "mu_ci95": {f"mu_{l + 1}": _credible(mus[:, l]) for l in range(mus.shape[1])},
        "wall_time_s": time.perf_counter() - t0,
        **fragment,
    }
    _write_summary(manifest, summary)
    _write_manifest_echo(manifest)
    return summary


def run_fit_regression(manifest: RunManifest) -> dict:
    """Posterior analysis with linear covariates (median regression)."""
    os.makedirs(manifest.output_dir, exist_ok=True)
    data, report = load_dataset(manifest.dataset)
    if not data.regression:
        raise ConfigurationError("fit-regression needs covariate columns")
    if np.any(np.all(data.covariates == 0.0, axis=0)):
        raise ConfigurationError("a covariate column is identically zero")
    t0 = time.perf_counter()
    result = run_chain(data, manifest.chain, manifest.hyper, manifest.shape)
    _echo_data(manifest, data)
    _write_traces(manifest, result)
    _write_likelihoods(manifest, result)
    _save_states(manifest, result)
    score = lpml(result.likelihoods)
    write_table(
        os.path.join(manifest.output_dir, "cpo.csv"),
        {"observation": np.arange(1, data.n + 1), "cpo": score.cpo},
    )
    profiles = np.unique(data.covariates, axis=0)
    write_table(
        os.path.join(manifest.output_dir, "profiles.csv"),
        {
            "profile": np.arange(1, profiles.shape[0] + 1),
            **{f"z_{j + 1}": profiles[:, j] for j in range(profiles.shape[1])},
        },
    )
    profile_summaries = {}
    for idx, profile in enumerate(profiles):
        _, fragment = _postprocess_fit(manifest, result.states, profile=profile)
        profile_summaries[f"profile_{idx + 1}"] = fragment

    gammas = np.stack([s.gamma for s in result.states])
    k, p = gammas.shape[1:]
    gamma_cols = {"iteration": result.iterations}
    for l in range(k):
        for h in range(p):
            gamma_cols[f"gamma_{l + 1}_{h + 1}"] = gammas[:, l, h]
    write_table(os.path.join(manifest.output_dir, "gamma_samples.csv"), gamma_cols)
    gamma_summary = {
        f"gamma_{l + 1}_{h + 1}": {
            "mean": float(gammas[:, l, h].mean()),
            "ci95": _credible(gammas[:, l, h]),
            "prob_positive": float(np.mean(gammas[:, l, h] > 0)),
        }
        for l in range(k)
        for h in range(p)
    }
    alphas = np.array([s.alpha for s in result.states])
    summary = {
        "experiment": manifest.experiment,
        "n": data.n,
        "rows_rejected": report.missing_rows,
        "retained": result.retained,
        "lpml": score.lpml,
        "lpml_floored_values": score.floored_values,
        "acceptance": {
            "r": result.acceptance.rate("r"),
            "alpha": result.acceptance.rate("alpha"),
            "gamma": result.acceptance.rate("gamma"),
        },
        "alpha_ci95": _credible(alphas),
        "gamma": gamma_summary,
        "profiles": profile_summaries,
        "wall_time_s": time.perf_counter() - t0,
    }
    _write_summary(manifest, summary)
    _write_manifest_echo(manifest)
    return summary


def recompute_lpml(run_dir: str) -> dict:
    """Recompute LPML/CPO from a stored likelihood matrix."""
    table = read_table(os.path.join(run_dir, "likelihood.csv"))
    obs_cols = sorted(
        (name for name in table if name.startswith("obs_")),
        key=lambda n: int(n.split("_")[1]),
    )
    if not obs_cols:
        raise ConfigurationError(f"{run_dir}/likelihood.csv has no observation columns")
    like = np.stack([table[name] for name in obs_cols], axis=1)
    score = lpml(like)
    write_table(
        os.path.join(run_dir, "cpo.csv"),
        {"observation": np.arange(1, like.shape[1] + 1), "cpo": score.cpo},
    )
    return {
        "lpml": score.lpml,
        "n": like.shape[1],
        "retained": like.shape[0],
        "floored_values": score.floored_values,
        "zero_observations": list(score.zero_observations),
    }


def regrid_from_states(run_dir: str, output_dir: str, resolution: int | None = None) -> dict:
    """Re-evaluate density outputs from stored retained states."""
    with open(os.path.join(run_dir, "manifest.json"), encoding="utf-8") as fh:
        manifest = load_manifest(json.load(fh))
    manifest.output_dir = output_dir
    if resolution is not None:
        manifest.grid_resolution = resolution
    os.makedirs(output_dir, exist_ok=True)
    states = load_states(os.path.join(run_dir, "states.npz"))
    if states[0].gamma is not None:
        table = read_table(os.path.join(run_dir, "profiles.csv"))
        z_cols = sorted(
            (n for n in table if n.startswith("z_")), key=lambda n: int(n.split("_")[1])
        )
        profiles = np.stack([table[n] for n in z_cols], axis=1)
        for idx in range(profiles.shape[0]):
            _postprocess_fit(manifest, states, profile=profiles[idx])
    else:
        _postprocess_fit(manifest, states)
    return {"retained": len(states), "resolution": manifest.grid_resolution}
