"""Projected Polya tree models for directional data.

A finite multivariate Polya tree prior on R^k, projected to the unit
hypersphere, gives a nonparametric model for (k-1)-dimensional angle
vectors.  The package provides prior sampling, density evaluation via
quadrature over the latent resultant length, posterior MCMC with data
augmentation, circular moment summaries, directional and
linear-directional regression, and a batch CLI for experiment runs.
"""

from pptree.geometry import PolarPoint, cartesian_to_polar, jacobian_abs, polar_to_cartesian
from pptree.numerics import GammaShapeRate, make_rng
from pptree.polya_tree import (
    BranchingProbabilities,
    CenteringMeasure,
    NodeAddress,
    TreeShape,
    sample_prior,
    tree_density,
)
from pptree.projected_density import (
    DensityGrid,
    QuadratureRule,
    RegressionContext,
    joint_grid,
    marginal_density,
    projected_density_at,
)
from pptree.inference import ChainConfig, McmcState, PriorHyperparams, run_chain

__all__ = [
    "BranchingProbabilities",
    "CenteringMeasure",
    "ChainConfig",
    "DensityGrid",
    "GammaShapeRate",
    "McmcState",
    "NodeAddress",
    "PolarPoint",
    "PriorHyperparams",
    "QuadratureRule",
    "RegressionContext",
    "TreeShape",
    "cartesian_to_polar",
    "jacobian_abs",
    "joint_grid",
    "make_rng",
    "marginal_density",
    "polar_to_cartesian",
    "projected_density_at",
    "run_chain",
    "sample_prior",
    "tree_density",
]

__version__ = "0.1.0"
