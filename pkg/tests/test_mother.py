"""
Unit tests for splatreg.mother

Checks the Gaussian evaluators against closed forms and finite differences.
"""

import numpy as np
import pytest

from splatreg.errors import UnsupportedMother
from splatreg.mother import GAUSSIAN, MotherSplat, get_mother


class TestGaussianDensity:
    """Density and score of the standard Gaussian"""

    @pytest.mark.parametrize("d", [1, 2, 3])
    def test_density_at_origin(self, d):
        """ρ(0) = (2π)^{-d/2}"""
        value = GAUSSIAN.density(np.zeros((1, d)))[0]
        assert abs(value - (2 * np.pi) ** (-d / 2)) < 1e-15

    def test_density_integrates_to_one(self):
        """Riemann sum of ρ over [-10, 10] is 1"""
        z = np.linspace(-10, 10, 20001)[:, None]
        total = np.sum(GAUSSIAN.density(z)) * (z[1, 0] - z[0, 0])
        assert abs(total - 1.0) < 1e-10

    def test_planar_moments(self):
        """In 2-D: unit mass, zero mean, identity covariance"""
        axis = np.linspace(-8, 8, 801)
        z = np.stack(np.meshgrid(axis, axis, indexing='ij'), axis=-1).reshape(-1, 2)
        weights = GAUSSIAN.density(z) * (axis[1] - axis[0]) ** 2
        mass = np.sum(weights)
        mean = weights @ z
        covariance = (z * weights[:, None]).T @ z
        assert abs(mass - 1.0) < 1e-10, f"mass {mass}"
        np.testing.assert_allclose(mean, 0.0, atol=1e-12)
        np.testing.assert_allclose(covariance, np.eye(2), atol=1e-9)

    def test_grad_log_is_minus_z(self, rng):
        z = rng.standard_normal((5, 3))
        np.testing.assert_array_equal(GAUSSIAN.grad_log(z), -z)

    def test_batched_axes(self, rng):
        """Evaluators act on the last axis of (k, n, d) arrays"""
        z = rng.standard_normal((4, 6, 2))
        assert GAUSSIAN.density(z).shape == (4, 6)
        assert GAUSSIAN.laplacian(z).shape == (4, 6)
        assert GAUSSIAN.grad_laplacian(z).shape == (4, 6, 2)


class TestGaussianDerivatives:
    """Laplacian evaluators against central differences"""

    def _fd_laplacian(self, fn, z, h=1e-4):
        total = np.zeros(z.shape[0])
        for a in range(z.shape[1]):
            e = np.zeros(z.shape[1])
            e[a] = h
            total += (fn(z + e) - 2 * fn(z) + fn(z - e)) / h ** 2
        return total

    def test_laplacian_matches_finite_differences(self, rng):
        z = rng.standard_normal((10, 2))
        fd = self._fd_laplacian(GAUSSIAN.density, z)
        np.testing.assert_allclose(GAUSSIAN.laplacian(z), fd, atol=1e-6)

    def test_grad_laplacian_matches_finite_differences(self, rng):
        z = rng.standard_normal((10, 3))
        h = 1e-6
        fd = np.stack([(GAUSSIAN.laplacian(z + h * e) - GAUSSIAN.laplacian(z - h * e)) / (2 * h)
                       for e in np.eye(3)], axis=-1)
        np.testing.assert_allclose(GAUSSIAN.grad_laplacian(z), fd, atol=1e-8)


class TestRegistry:
    """Mother splat lookup"""

    def test_lookup_is_case_insensitive(self):
        assert get_mother(' Gaussian ') is GAUSSIAN
        assert GAUSSIAN.is_gaussian

    def test_unknown_kind_raises(self):
        with pytest.raises(UnsupportedMother, match="not found"):
            get_mother('student-t')

    def test_require_laplacian_rejects_incomplete_mother(self):
        """A mother without Laplacian evaluators cannot serve PDE losses"""
        bare = MotherSplat(kind='bare', density=GAUSSIAN.density, grad_log=GAUSSIAN.grad_log)
        with pytest.raises(UnsupportedMother, match="poisson"):
            bare.require_laplacian('poisson_loss')
        GAUSSIAN.require_laplacian('poisson_loss')


if __name__ == '__main__':
    pytest.main([__file__, '-v'])
