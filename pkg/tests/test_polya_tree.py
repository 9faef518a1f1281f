import itertools

import numpy as np
import pytest

from conftest import origin_center, prior_mean_probs
from pptree.numerics import make_rng
from pptree.polya_tree import (
    BranchingProbabilities,
    CenteringMeasure,
    NodeAddress,
    TreeShape,
    group_children,
    locate,
    locate_indices,
    log_prior_density_Y,
    partition_bounds,
    prior_alphas,
    sample_prior,
    set_probability,
    tree_density,
    tree_log_weights,
)

PHI_INV_25 = -0.6744897501960817


class TestTreeShape:
    def test_validation(self):
        with pytest.raises(ValueError):
            TreeShape(k=0, M=3, alpha=1.0, delta=1.1)
        with pytest.raises(ValueError):
            TreeShape(k=2, M=3, alpha=0.0, delta=1.1)
        with pytest.raises(ValueError):
            TreeShape(k=2, M=3, alpha=1.0, delta=0.5)

    def test_storage_sizes(self):
        shape = TreeShape(k=3, M=3, alpha=1.0, delta=1.1)
        total = sum(shape.nodes_at(m) * shape.fanout for m in range(shape.M))
        assert total == 8 + 64 + 512


class TestPartitionBounds:
    def test_median_split(self):
        shape = TreeShape(k=1, M=2, alpha=1.0, delta=1.1)
        lo, hi = partition_bounds(shape, origin_center(1), level=1, coord=0, index=1)
        assert lo == -np.inf
        assert hi == pytest.approx(0.0, abs=1e-12)

    def test_quartile(self):
        shape = TreeShape(k=1, M=2, alpha=1.0, delta=1.1)
        lo, hi = partition_bounds(shape, origin_center(1), level=2, coord=0, index=2)
        assert lo == pytest.approx(PHI_INV_25, abs=1e-9)
        assert hi == pytest.approx(0.0, abs=1e-12)

    def test_shifted_center(self):
        shape = TreeShape(k=1, M=1, alpha=1.0, delta=1.1)
        center = CenteringMeasure(np.array([1.5]))
        lo, hi = partition_bounds(shape, center, level=1, coord=0, index=2)
        assert lo == pytest.approx(1.5, abs=1e-12)
        assert hi == np.inf

    def test_index_out_of_range(self):
        shape = TreeShape(k=1, M=2, alpha=1.0, delta=1.1)
        with pytest.raises(ValueError):
            partition_bounds(shape, origin_center(1), level=1, coord=0, index=3)


class TestLocate:
    def test_sign_split(self):
        shape = TreeShape(k=2, M=1, alpha=1.0, delta=1.1)
        node = locate(shape, origin_center(2), np.array([0.1, -0.1]), 1)
        assert node.index == (2, 1)

    def test_quartile_side(self):
        shape = TreeShape(k=1, M=2, alpha=1.0, delta=1.1)
        assert locate(shape, origin_center(1), np.array([-0.7]), 2).index == (1,)

    def test_boundary_falls_left(self):
        shape = TreeShape(k=1, M=2, alpha=1.0, delta=1.1)
        assert locate(shape, origin_center(1), np.array([-0.67449]), 2).index == (1,)
        assert locate(shape, origin_center(1), np.array([-0.6744]), 2).index == (2,)

    def test_exact_boundary_point_left_closed_right(self):
        shape = TreeShape(k=1, M=1, alpha=1.0, delta=1.1)
        assert locate(shape, origin_center(1), np.array([0.0]), 1).index == (1,)

    def test_nonfinite_rejected(self):
        shape = TreeShape(k=1, M=1, alpha=1.0, delta=1.1)
        with pytest.raises(ValueError):
            locate(shape, origin_center(1), np.array([np.nan]), 1)

    def test_agrees_with_partition_bounds(self, rng):
        shape = TreeShape(k=2, M=3, alpha=1.0, delta=1.1)
        center = CenteringMeasure(rng.normal(size=2))
        x = rng.normal(size=(10_000, 2)) * 2.0
        for m in range(1, shape.M + 1):
            j = locate_indices(center, x, m)
            for coord in range(2):
                lo = np.where(
                    j[:, coord] == 1,
                    -np.inf,
                    center.mu[coord]
                    + np.array(
                        [partition_bounds(shape, origin_center(1), m, 0, jj)[0] for jj in j[:, coord]]
                    ),
                )
                hi = np.where(
                    j[:, coord] == 2**m,
                    np.inf,
                    center.mu[coord]
                    + np.array(
                        [partition_bounds(shape, origin_center(1), m, 0, jj)[1] for jj in j[:, coord]]
                    ),
                )
                assert np.all((x[:, coord] > lo) & (x[:, coord] <= hi))


class TestPriorAlphas:
    def test_level_zero(self):
        shape = TreeShape(k=2, M=3, alpha=1.0, delta=1.1)
        assert np.allclose(prior_alphas(shape, NodeAddress(0, (1, 1))), 1.0)

    def test_level_two(self):
        shape = TreeShape(k=2, M=3, alpha=1.0, delta=1.1)
        value = prior_alphas(shape, NodeAddress(2, (3, 1)))
        assert np.allclose(value, 3.0**1.1)
        assert value.size == 4

    def test_integer_powers(self):
        shape = TreeShape(k=1, M=2, alpha=2.0, delta=2.0)
        assert np.allclose(prior_alphas(shape, NodeAddress(1, (2,))), 8.0)

    def test_leaves_have_no_children(self):
        shape = TreeShape(k=1, M=2, alpha=1.0, delta=1.1)
        with pytest.raises(ValueError):
            prior_alphas(shape, NodeAddress(2, (1,)))


class TestSamplePrior:
    def test_structure(self, rng):
        shape = TreeShape(k=2, M=1, alpha=1.0, delta=1.1)
        probs = sample_prior(shape, rng)
        assert probs.depth == 1
        assert probs.levels[0].shape == (1, 4)
        assert abs(probs.levels[0].sum() - 1.0) < 1e-12

    def test_frozen_root_exact(self, rng):
        shape = TreeShape(k=3, M=2, alpha=1.0, delta=1.1)
        probs = sample_prior(shape, rng, frozen_root=True)
        assert np.all(probs.levels[0] == 1.0 / 8.0)
        assert probs.frozen_root

    def test_prior_mean_of_entries(self):
        shape = TreeShape(k=2, M=1, alpha=1.0, delta=1.1)
        rng = make_rng(10)
        draws = np.array([sample_prior(shape, rng).levels[0][0] for _ in range(10_000)])
        se = draws.std(axis=0) / np.sqrt(len(draws))
        assert np.all(np.abs(draws.mean(axis=0) - 0.25) < 3 * se)

    def test_rows_sum_to_one(self, rng):
        shape = TreeShape(k=3, M=3, alpha=0.7, delta=1.3)
        probs = sample_prior(shape, rng)
        for lv in probs.levels:
            assert np.max(np.abs(lv.sum(axis=1) - 1.0)) < 1e-12


class TestSetProbability:
    def test_prior_mean_value(self):
        shape = TreeShape(k=2, M=3, alpha=1.0, delta=1.1)
        probs = prior_mean_probs(shape)
        for m in (1, 2, 3):
            node = NodeAddress(m, (1, 2**m))
            assert set_probability(shape, probs, node) == pytest.approx(0.5 ** (2 * m))

    def test_single_factor(self):
        shape = TreeShape(k=2, M=1, alpha=1.0, delta=1.1)
        probs = BranchingProbabilities(levels=[np.array([[0.4, 0.2, 0.3, 0.1]])])
        assert set_probability(shape, probs, NodeAddress(1, (1, 1))) == pytest.approx(0.4)
        assert set_probability(shape, probs, NodeAddress(1, (1, 2))) == pytest.approx(0.2)
        assert set_probability(shape, probs, NodeAddress(1, (2, 1))) == pytest.approx(0.3)

    def test_leaves_sum_to_one(self, rng):
        shape = TreeShape(k=2, M=3, alpha=1.0, delta=1.1)
        probs = sample_prior(shape, rng)
        total = sum(
            set_probability(shape, probs, NodeAddress(3, (j1, j2)))
            for j1 in range(1, 9)
            for j2 in range(1, 9)
        )
        assert total == pytest.approx(1.0, abs=1e-10)

    def test_parent_equals_children_sum(self, rng):
        shape = TreeShape(k=2, M=3, alpha=1.0, delta=1.1)
        probs = sample_prior(shape, rng)
        for m in range(1, shape.M):
            for index in itertools.product(range(1, 2**m + 1), repeat=2):
                parent = set_probability(shape, probs, NodeAddress(m, index))
                children = sum(
                    set_probability(
                        shape, probs, NodeAddress(m + 1, (2 * index[0] - 1 + c1, 2 * index[1] - 1 + c2))
                    )
                    for c1 in (0, 1)
                    for c2 in (0, 1)
                )
                assert abs(parent - children) < 1e-12


class TestTreeDensity:
    def test_prior_mean_equals_centering_density(self, rng):
        shape = TreeShape(k=2, M=3, alpha=1.0, delta=1.1)
        center = CenteringMeasure(np.array([0.4, -0.2]))
        probs = prior_mean_probs(shape)
        for _ in range(20):
            x = rng.normal(size=2) * 2
            f0 = np.exp(center.log_density(x))
            assert tree_density(shape, probs, center, x) == pytest.approx(f0, rel=1e-12)

    def test_zero_branch_kills_density(self):
        shape = TreeShape(k=1, M=1, alpha=1.0, delta=1.1)
        probs = BranchingProbabilities(levels=[np.array([[1.0, 0.0]])])
        assert tree_density(shape, probs, origin_center(1), np.array([0.5])) == 0.0

    def test_integrates_to_one(self, rng):
        # quadrature oracle: tensor midpoint rule over [-8, 8]^2
        shape = TreeShape(k=2, M=2, alpha=1.0, delta=1.1)
        center = origin_center(2)
        probs = sample_prior(shape, rng)
        n = 400
        g = -8.0 + 16.0 * (np.arange(n) + 0.5) / n
        xx, yy = np.meshgrid(g, g, indexing="ij")
        pts = np.column_stack([xx.ravel(), yy.ravel()])
        vals = np.exp(
            tree_log_weights(shape, probs, center, pts) + center.log_density(pts)
        ) * 2.0 ** (2 * 2)
        integral = vals.sum() * (16.0 / n) ** 2
        assert integral == pytest.approx(1.0, abs=0.005)

    def test_prior_mean_property(self):
        # averaging the random density over prior draws recovers f0
        shape = TreeShape(k=2, M=2, alpha=1.0, delta=1.1)
        center = origin_center(2)
        x = np.array([0.37, -0.81])
        rng = make_rng(21)
        vals = np.array(
            [tree_density(shape, sample_prior(shape, rng), center, x) for _ in range(10_000)]
        )
        f0 = np.exp(center.log_density(x))
        se = vals.std() / np.sqrt(len(vals))
        assert abs(vals.mean() - f0) < 3 * se


class TestLogPriorDensity:
    def test_uniform_beta(self):
        shape = TreeShape(k=1, M=1, alpha=1.0, delta=1.1)
        probs = BranchingProbabilities(levels=[np.array([[0.5, 0.5]])])
        assert log_prior_density_Y(shape, probs) == pytest.approx(0.0, abs=1e-12)

    def test_beta22_at_half(self):
        shape = TreeShape(k=1, M=1, alpha=2.0, delta=1.0)
        probs = BranchingProbabilities(levels=[np.array([[0.5, 0.5]])])
        assert log_prior_density_Y(shape, probs) == pytest.approx(np.log(1.5), abs=1e-12)

    def test_alpha_dependence(self, rng):
        shape = TreeShape(k=2, M=2, alpha=1.0, delta=1.1)
        probs = sample_prior(shape, rng)
        doubled = TreeShape(k=2, M=2, alpha=2.0, delta=1.1)
        assert log_prior_density_Y(shape, probs) != log_prior_density_Y(doubled, probs)

    def test_boundary_conventions(self):
        degenerate = BranchingProbabilities(levels=[np.array([[1.0, 0.0]])])
        # exponent > 1: genuine -inf
        assert log_prior_density_Y(TreeShape(k=1, M=1, alpha=2.0, delta=1.0), degenerate) == -np.inf
        # exponent < 1: -inf by convention, not +inf
        assert log_prior_density_Y(TreeShape(k=1, M=1, alpha=0.5, delta=1.0), degenerate) == -np.inf
        # exponent exactly 1: uniform density, boundary point is fine
        assert log_prior_density_Y(
            TreeShape(k=1, M=1, alpha=1.0, delta=1.0), degenerate
        ) == pytest.approx(0.0)

    def test_frozen_root_excluded(self, rng):
        shape = TreeShape(k=2, M=2, alpha=1.3, delta=1.1)
        probs = sample_prior(shape, rng, frozen_root=True)
        unfrozen = BranchingProbabilities(levels=[lv.copy() for lv in probs.levels])
        from pptree.polya_tree import level_log_sums

        sums = level_log_sums(probs)
        assert sums[0] is None  # level-0 term dropped from the prior density
        assert log_prior_density_Y(shape, probs) != pytest.approx(
            log_prior_density_Y(shape, unfrozen)
        )


def test_group_children_matches_explicit_indexing(rng):
    shape = TreeShape(k=2, M=2, alpha=1.0, delta=1.1)
    values = rng.integers(0, 50, size=16).astype(np.int64)  # level-2 counts, 4x4 grid
    grouped = group_children(values, parent_level=1, k=2)
    assert grouped.shape == (4, 4)
    for j1, j2 in itertools.product((1, 2), repeat=2):
        parent_row = (j1 - 1) * 2 + (j2 - 1)
        for c1, c2 in itertools.product((0, 1), repeat=2):
            child = (2 * j1 - 2 + c1) * 4 + (2 * j2 - 2 + c2)
            assert grouped[parent_row, c1 * 2 + c2] == values[child]
