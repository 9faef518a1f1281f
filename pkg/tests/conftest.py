import numpy as np
import pytest

from pptree.numerics import make_rng
from pptree.polya_tree import BranchingProbabilities, CenteringMeasure, TreeShape, sample_prior


@pytest.fixture
def rng():
    return make_rng(12345)


def prior_mean_probs(shape: TreeShape) -> BranchingProbabilities:
    """All branching vectors at their prior mean (uniform splits)."""
    probs = sample_prior(shape, make_rng(0))
    for lv in probs.levels:
        lv[:] = 1.0 / shape.fanout
    return probs


def origin_center(k: int) -> CenteringMeasure:
    return CenteringMeasure(np.zeros(k))
