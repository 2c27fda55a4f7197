"""
Unit tests for splatreg.gradients

The analytic Wasserstein-Fisher-Rao gradients are compared with central
differences of the loss, and with the particle limit of a shrinking splat.
"""

import numpy as np
import pytest

from splatreg.errors import NonFinite
from splatreg.gradients import (
    FirstVariation,
    GradientSet,
    fd_gradient_oracle,
    gradient_check,
    particle_gradients,
    pullback,
    relative_error,
    wfr_gradients,
)
from splatreg.losses import Dataset, ls_gradients, ls_loss
from splatreg.model import SplatModel
from splatreg.mother import GAUSSIAN

from tests.conftest import make_random_model


class TestLeastSquaresAgainstFiniteDifferences:
    """Analytic gradients of the least-squares loss"""

    def test_random_instances(self, rng):
        """50 random problems with k ≤ 5, d ≤ 3, p ≤ 3 agree to 1e-5"""
        worst = {block: 0.0 for block in ('v', 'A', 'b', 'm')}
        for _ in range(50):
            k, d, p = int(rng.integers(2, 6)), int(rng.integers(1, 4)), int(rng.integers(1, 4))
            model = make_random_model(rng, k, d, p)
            data = Dataset(x=rng.uniform(size=(10, d)), y=rng.standard_normal((10, p)))
            errors = gradient_check(model, lambda mdl: ls_loss(mdl, data), ls_gradients(model, data))
            for block, err in errors.items():
                worst[block] = max(worst[block], err)
        for block, err in worst.items():
            assert err < 1e-5, f"block {block}: max relative error {err:.3e}"

    def test_single_splat_mass_block(self, rng):
        """A one-splat model has a vanishing centered Fisher-Rao gradient"""
        model = make_random_model(rng, 1, 2, 1)
        data = Dataset(x=rng.uniform(size=(8, 2)), y=rng.standard_normal(8))
        errors = gradient_check(model, lambda mdl: ls_loss(mdl, data), ls_gradients(model, data))
        assert errors['m'] < 1e-10

    def test_fisher_rao_gradient_is_centered(self, rng):
        for _ in range(10):
            model = make_random_model(rng, 5, 2, 2)
            data = Dataset(x=rng.uniform(size=(20, 2)), y=rng.standard_normal((20, 2)))
            grads = ls_gradients(model, data)
            assert abs(np.dot(model.m, grads.gfr)) <= 1e-10


class TestStructure:
    """Algebraic properties of the pullback"""

    def test_linear_in_first_variation(self, random_model, rng):
        model = random_model(k=3, d=2, p=2)
        X = rng.uniform(size=(15, 2))
        w = rng.uniform(size=15)
        s1, s2 = rng.standard_normal((15, 2)), rng.standard_normal((15, 2))
        combined = pullback(model, X, 2.0 * s1 - 0.5 * s2, w)
        separate = pullback(model, X, s1, w).scaled(2.0) + pullback(model, X, s2, w).scaled(-0.5)
        for block in ('v', 'A', 'b', 'm'):
            np.testing.assert_allclose(combined.block(block), separate.block(block), rtol=1e-10, atol=1e-13)

    def test_permutation_equivariance(self, random_model, rng):
        model = random_model(k=4, d=2, p=1)
        fv = FirstVariation(points=rng.uniform(size=(12, 2)), values=rng.standard_normal(12),
                            weights=np.ones(12))
        perm = rng.permutation(4)
        permuted = wfr_gradients(model.select(perm), fv)
        expected = wfr_gradients(model, fv).select(perm)
        for block in ('v', 'A', 'b', 'm'):
            np.testing.assert_allclose(permuted.block(block), expected.block(block), rtol=1e-10, atol=1e-13)

    def test_zero_signal_gives_zero_gradients(self, random_model, rng):
        model = random_model(k=3, d=2, p=1)
        grads = pullback(model, rng.uniform(size=(5, 2)), np.zeros(5), np.ones(5))
        zeros = GradientSet.zeros_like(model)
        for block in ('v', 'A', 'b', 'm'):
            np.testing.assert_array_equal(grads.block(block), zeros.block(block))

    def test_non_finite_first_variation(self, random_model):
        model = random_model(k=2, d=1, p=1)
        fv = FirstVariation(points=[[0.1], [0.2]], values=[1.0, np.nan], weights=[1.0, 1.0])
        with pytest.raises(NonFinite):
            wfr_gradients(model, fv)

    def test_first_variation_concatenation(self):
        a = FirstVariation(points=[[0.1]], values=[1.0], weights=[0.5])
        b = FirstVariation(points=[[0.9], [0.3]], values=[2.0, 3.0], weights=[1.0, 1.0])
        joined = a + b
        assert joined.points.shape == (3, 1)
        np.testing.assert_array_equal(joined.weights, [0.5, 1.0, 1.0])

    def test_negative_weights_rejected(self):
        with pytest.raises(ValueError, match="nonnegative"):
            FirstVariation(points=[[0.1]], values=[1.0], weights=[-1.0])


class TestParticleLimit:
    """Gradients of point-mass particles"""

    def test_constant_first_variation(self, rng):
        """Constant δF: gv = c, gx = 0, gfr = ⟨c, v_i⟩ minus its mean"""
        v = rng.standard_normal((4, 2))
        x = rng.uniform(size=(4, 3))
        c = np.array([0.5, -1.0])
        grads = particle_gradients(v, x, lambda X: np.tile(c, (X.shape[0], 1)))
        np.testing.assert_allclose(grads.gv, np.tile(c, (4, 1)))
        np.testing.assert_allclose(grads.gx, 0.0, atol=1e-9)
        pairing = v @ c
        np.testing.assert_allclose(grads.gfr, pairing - pairing.mean(), atol=1e-14)

    def test_zero_outputs(self, rng):
        grads = particle_gradients(np.zeros((3, 1)), rng.uniform(size=(3, 2)),
                                   lambda X: np.sin(X[:, :1]))
        np.testing.assert_array_equal(grads.gx, 0.0)
        np.testing.assert_array_equal(grads.gfr, 0.0)

    def test_analytic_jacobian_matches_finite_differences(self, rng):
        def delta(X):
            return np.sin(X[:, 0]) + X[:, 1] ** 2

        def jacobian(X):
            return np.stack([np.cos(X[:, 0]), 2.0 * X[:, 1]], axis=-1)[:, None, :]

        v = rng.standard_normal((5, 1))
        x = rng.uniform(size=(5, 2))
        exact = particle_gradients(v, x, delta, jacobian=jacobian)
        approx = particle_gradients(v, x, delta)
        np.testing.assert_allclose(approx.gx, exact.gx, rtol=1e-7, atol=1e-9)
        np.testing.assert_allclose(exact.gx, v * jacobian(x)[:, 0, :])

    def test_shrinking_splat_approaches_particle(self):
        """A splat of width 1e-3 reproduces the particle gradients"""
        def delta(X):
            return np.sin(3.0 * X[:, :1])

        b, v = 0.5, 1.5
        model = SplatModel(GAUSSIAN, v=[[v]], A=[[[1e-3]]], b=[[b]], m=[1.0])
        grid = np.linspace(0.0, 1.0, 20001)[:, None]
        fv = FirstVariation(points=grid, values=delta(grid), weights=np.full(grid.shape[0], 1.0 / 20000))
        splat = wfr_gradients(model, fv)
        particle = particle_gradients([[v]], [[b]], delta,
                                      jacobian=lambda X: 3.0 * np.cos(3.0 * X)[:, :, None])
        assert abs(splat.gv[0, 0] - np.sin(1.5)) < 1e-4, f"gv={splat.gv[0, 0]}"
        assert abs(splat.gb[0, 0] - v * 3.0 * np.cos(1.5)) < 1e-4, f"gb={splat.gb[0, 0]}"
        assert abs(splat.gb[0, 0] - particle.gx[0, 0]) < 1e-4


class TestFiniteDifferenceOracle:
    """Central-difference reference gradients"""

    def test_quadratic_in_v(self, rng):
        model = SplatModel(GAUSSIAN, v=[[0.3, -1.2]], A=[[[1.0]]], b=[[0.0]], m=[1.0])
        grad = fd_gradient_oracle(model, lambda mdl: float(np.sum(mdl.v ** 2)), 'v')
        np.testing.assert_allclose(grad, 2.0 * model.v, rtol=1e-9)

    def test_second_order_accuracy(self):
        """Halving the step divides the error by about four"""
        model = SplatModel(GAUSSIAN, v=[[0.7]], A=[[[1.0]]], b=[[0.0]], m=[1.0])
        exact = np.cos(0.7)

        def loss(mdl):
            return float(np.sum(np.sin(mdl.v)))

        errors = [abs(fd_gradient_oracle(model, loss, 'v', step=h)[0, 0] - exact)
                  for h in (1e-2, 5e-3, 2.5e-3)]
        for coarse, fine in zip(errors, errors[1:]):
            assert 3.5 < coarse / fine < 4.5, f"errors {errors}"

    def test_per_mass_scaling(self, rng):
        model = SplatModel(GAUSSIAN, v=[[1.0], [2.0]], A=[[[1.0]], [[1.0]]], b=[[0.0], [1.0]], m=[0.25, 0.75])

        def loss(mdl):
            return float(np.sum(mdl.m[:, None] * mdl.v ** 2))

        raw = fd_gradient_oracle(model, loss, 'v', per_mass=False)
        scaled = fd_gradient_oracle(model, loss, 'v')
        np.testing.assert_allclose(raw, 2.0 * model.m[:, None] * model.v, rtol=1e-8)
        np.testing.assert_allclose(scaled, 2.0 * model.v, rtol=1e-8)

    def test_zero_mass_rejected(self):
        model = SplatModel(GAUSSIAN, v=[[1.0]], A=[[[1.0]]], b=[[0.0]], m=[0.0])
        with pytest.raises(ValueError, match="positive masses"):
            fd_gradient_oracle(model, lambda mdl: 0.0, 'v')

    def test_unknown_block(self, unit_splat):
        with pytest.raises(ValueError, match="Unknown block"):
            fd_gradient_oracle(unit_splat, lambda mdl: 0.0, 'sigma')

    def test_relative_error(self):
        assert relative_error(np.array([1.0, 2.1]), np.array([1.0, 2.0])) == pytest.approx(0.05)
        assert relative_error(np.array([1e-13]), np.array([0.0])) == 1e-13


if __name__ == '__main__':
    pytest.main([__file__, '-v'])
