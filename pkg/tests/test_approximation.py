"""
Unit tests for splatreg.approximation

The random-sample construction and its sup-norm error.
"""

import numpy as np
import pytest
from scipy import stats

from splatreg.approximation import (
    ConstructionSpec,
    approx_bound_table,
    build_construction,
    median_sup_errors,
    sup_error,
    tensor_grid,
)
from splatreg.errors import DimensionError
from splatreg.model import eval, evaluate
from splatreg.targets import get_target


def sine(X):
    return np.sin(2.0 * np.pi * X[:, 0])


class TestConstruction:
    """Sampled splat models"""

    def test_single_splat_constant(self):
        model = build_construction(ConstructionSpec(lambda X: np.full(X.shape[0], 2.0), d=1, eps=0.1, k=1))
        value = eval(model, model.b[0])[0]
        assert abs(value - 2.0 / (np.sqrt(2 * np.pi) * 0.1)) < 1e-12

    def test_matches_kernel_sum(self):
        spec = ConstructionSpec(sine, d=1, eps=0.05, k=200, seed=4)
        model = build_construction(spec)
        x = np.linspace(0, 1, 101)
        centers = model.b[:, 0]
        kernel = stats.norm.pdf(x[:, None], loc=centers[None, :], scale=0.05)
        expected = kernel @ np.sin(2 * np.pi * centers) / 200
        np.testing.assert_allclose(evaluate(model, x[:, None])[:, 0], expected, atol=1e-12)

    def test_parameters(self):
        model = build_construction(ConstructionSpec(sine, d=2, eps=0.2, k=50, seed=1))
        assert abs(np.sum(model.m) - 1.0) < 1e-14
        np.testing.assert_array_equal(model.A, np.tile(0.2 * np.eye(2), (50, 1, 1)))
        assert np.all((model.b >= 0) & (model.b <= 1))
        np.testing.assert_array_equal(model.v[:, 0], sine(model.b))

    def test_seeded(self):
        a = build_construction(ConstructionSpec(sine, d=1, eps=0.1, k=10, seed=3))
        b = build_construction(ConstructionSpec(sine, d=1, eps=0.1, k=10, seed=3))
        np.testing.assert_array_equal(a.b, b.b)

    @pytest.mark.parametrize("kwargs", [{'eps': 0.0}, {'k': 0}, {'d': 0}])
    def test_invalid_spec(self, kwargs):
        params = dict(target=sine, d=1, eps=0.1, k=10)
        params.update(kwargs)
        with pytest.raises(ValueError):
            ConstructionSpec(**params)


class TestSupError:
    """Sup-norm error over tensor grids"""

    def test_self_approximation_is_exact(self, random_model):
        model = random_model(k=3, d=2, p=2)
        assert sup_error(model, lambda X: evaluate(model, X), n_per_axis=21) == 0.0

    def test_dimension_mismatch(self, random_model):
        model = random_model(k=2, d=1, p=1)
        with pytest.raises(DimensionError):
            sup_error(model, sine, n_per_axis=11, d=2)

    def test_output_mismatch(self, random_model):
        model = random_model(k=2, d=1, p=2)
        with pytest.raises(DimensionError):
            sup_error(model, sine, n_per_axis=11)

    def test_tensor_grid(self):
        grid = tensor_grid(3, 2)
        assert grid.shape == (9, 2)
        np.testing.assert_array_equal(grid[4], [0.5, 0.5])


class TestApproximationTrend:
    """Error shrinks as ε → 0 with k growing"""

    def test_table_layout(self):
        table = approx_bound_table(sine, 1, [0.2], [20], seeds=[0, 1], n_per_axis=101)
        assert list(table.columns) == ['eps', 'k', 'seed', 'sup_error']
        assert len(table) == 2
        assert len(median_sup_errors(table)) == 1

    def test_mismatched_pairs(self):
        with pytest.raises(ValueError):
            approx_bound_table(sine, 1, [0.2, 0.1], [20], seeds=[0])

    @pytest.mark.validation
    def test_smaller_bandwidth_more_samples_is_better(self):
        """Median over five seeds at (0.05, 10⁴) beats (0.2, 10²) for sin(2πx)"""
        table = approx_bound_table(get_target('sine'), 1, [0.2, 0.05], [100, 10000], seeds=range(5))
        medians = median_sup_errors(table).set_index('eps')['sup_error']
        assert medians[0.05] < medians[0.2], f"medians {medians.to_dict()}"


if __name__ == '__main__':
    pytest.main([__file__, '-v'])
