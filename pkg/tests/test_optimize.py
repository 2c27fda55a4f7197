"""
Unit tests for splatreg.optimize

Update rules, birth-death, initialization, the training loop and its
trace, plus the long-running acceptance reproductions (marked slow).
"""

from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from splatreg.cli import run
from splatreg.errors import EmptyModel, NonFinite
from splatreg.gradients import GradientSet
from splatreg.losses import Dataset, LeastSquaresObjective, Objective
from splatreg.model import SplatModel, evaluate, load_model
from splatreg.mother import GAUSSIAN
from splatreg.optimize import (
    AdamState,
    OptimizerConfig,
    TraceRecord,
    TrainTrace,
    birth_death,
    chebyshev_centers,
    fisher_rao_update,
    initialize_model,
    project,
    prune_and_clone,
    step,
    train,
)
from splatreg.targets import gen_data

from tests.conftest import make_random_model

CONFIGS = Path(__file__).resolve().parent.parent / 'configs'


def random_grads(rng, model):
    return GradientSet(rng.standard_normal(model.v.shape), rng.standard_normal(model.A.shape),
                       rng.standard_normal(model.b.shape), rng.standard_normal(model.m.shape))


class TestOptimizerConfig:
    """Validation of optimizer settings"""

    @pytest.mark.parametrize("kwargs, field", [
        ({'algorithm': 'sgd'}, 'algorithm'),
        ({'learning_rate': 0.0}, 'learning_rate'),
        ({'beta1': 1.0}, 'beta1'),
        ({'steps': -1}, 'steps'),
        ({'sigma_min': 0.0}, 'sigma_min'),
        ({'prune_threshold': 0.6, 'clone_threshold': 0.5}, 'prune_threshold'),
        ({'trace_every': 0}, 'trace_every'),
    ])
    def test_invalid_settings_name_the_field(self, kwargs, field):
        with pytest.raises(ValueError, match=field):
            OptimizerConfig(**kwargs)

    def test_algorithm_is_normalized(self):
        assert OptimizerConfig(algorithm=' ADAM ').algorithm == 'adam'


class TestStep:
    """Single WFR updates"""

    @pytest.mark.parametrize("algorithm", ['gd', 'adam'])
    def test_zero_gradients_leave_model_unchanged(self, random_model, algorithm):
        model = random_model(k=3, d=2, p=2)
        new = step(model, GradientSet.zeros_like(model), OptimizerConfig(algorithm=algorithm))
        for name in ('v', 'A', 'b', 'm'):
            np.testing.assert_array_equal(getattr(new, name), getattr(model, name))

    def test_gradient_descent_update(self, random_model, rng):
        model = random_model(k=3, d=2, p=1)
        grads = random_grads(rng, model)
        new = step(model, grads, OptimizerConfig(learning_rate=1e-3))
        np.testing.assert_array_equal(new.v, model.v - 1e-3 * model.m[:, None] * grads.gv)
        np.testing.assert_array_equal(new.b, model.b - 1e-3 * model.m[:, None] * grads.gb)
        np.testing.assert_array_equal(new.A, model.A - 1e-3 * model.m[:, None, None] * grads.gA)
        np.testing.assert_array_equal(new.m, model.m)

    def test_one_splat_gradient_descent(self, unit_splat, rng):
        grads = random_grads(rng, unit_splat)
        new = step(unit_splat, grads, OptimizerConfig(learning_rate=0.1))
        np.testing.assert_array_equal(new.v, unit_splat.v - 0.1 * grads.gv)

    def test_first_adam_step_moves_by_learning_rate(self, random_model, rng):
        """With bias correction the first Adam step is ≈ lr·sign(g)"""
        model = random_model(k=2, d=1, p=1)
        grads = random_grads(rng, model)
        new = step(model, grads, OptimizerConfig(algorithm='adam', learning_rate=0.01))
        np.testing.assert_allclose(model.v - new.v, 0.01 * np.sign(grads.gv), rtol=1e-4)

    def test_model_is_not_modified(self, random_model, rng):
        model = random_model(k=2, d=2, p=1)
        before = model.copy()
        step(model, random_grads(rng, model), OptimizerConfig(fr_enabled=True))
        np.testing.assert_array_equal(model.v, before.v)
        np.testing.assert_array_equal(model.m, before.m)

    def test_fisher_rao_renormalizes(self, random_model, rng):
        model = random_model(k=5, d=1, p=1)
        for _ in range(20):
            model = step(model, random_grads(rng, model), OptimizerConfig(fr_enabled=True, fr_rate=0.5))
            assert abs(np.sum(model.m) - 1.0) <= 1e-12
            assert np.all(model.m > 0)

    def test_fisher_rao_direction(self):
        m = fisher_rao_update(np.array([0.5, 0.5]), np.array([1.0, -1.0]), 0.1)
        assert m[1] > m[0]

    def test_non_finite_update(self, random_model):
        model = random_model(k=2, d=1, p=1)
        grads = GradientSet.zeros_like(model)
        grads.gv[0, 0] = np.inf
        with pytest.raises(NonFinite) as info:
            step(model, grads, OptimizerConfig(), step_index=7)
        assert info.value.step == 7


class TestProjection:
    """Lower bound on the singular values of A"""

    def test_clamps_small_singular_values(self, rng):
        U, _ = np.linalg.qr(rng.standard_normal((3, 3)))
        V, _ = np.linalg.qr(rng.standard_normal((3, 3)))
        A = np.stack([U @ np.diag([1.0, 0.5, 1e-9]) @ V.T, np.eye(3)])
        out = project(A, 1e-6)
        sigma = np.linalg.svd(out, compute_uv=False)
        assert sigma.min() >= 1e-6 * (1 - 1e-8), f"smallest singular value {sigma.min()}"
        np.testing.assert_array_equal(out[1], np.eye(3))

    def test_well_conditioned_input_is_returned(self, random_model):
        A = random_model(k=3, d=2, p=1).A
        assert project(A, 1e-6) is A


class TestBirthDeath:
    """Pruning and cloning of the splat population"""

    def test_prune_then_clone(self, rng):
        model = SplatModel(GAUSSIAN, v=[[1.0], [2.0], [3.0]], A=[0.1 * np.eye(2)] * 3,
                           b=[[0.2, 0.2], [0.5, 0.5], [0.8, 0.8]], m=[0.7, 0.3 - 5e-7, 5e-7])
        cfg = OptimizerConfig(prune_threshold=1e-6, clone_threshold=0.5, clone_scale=1e-3)
        out, parents, fresh = birth_death(model, cfg, rng)
        np.testing.assert_array_equal(parents, [0, 1, 0])
        np.testing.assert_array_equal(fresh, [False, False, True])
        assert abs(np.sum(out.m) - 1.0) < 1e-15
        assert out.m[0] == out.m[2]
        np.testing.assert_allclose(0.5 * (out.b[0] + out.b[2]), model.b[0], atol=1e-15)
        assert np.linalg.norm(out.b[0] - model.b[0]) == pytest.approx(1e-4, rel=1e-10)
        np.testing.assert_array_equal(out.v[2], model.v[0])

    def test_clone_barely_moves_the_function(self, rng):
        model = SplatModel(GAUSSIAN, v=[[1.0], [-2.0]], A=[[[0.08, 0.02], [0.0, 0.12]], 0.1 * np.eye(2)],
                           b=[[0.3, 0.4], [0.7, 0.6]], m=[0.8, 0.2])
        out = prune_and_clone(model, OptimizerConfig(prune_threshold=1e-6, clone_threshold=0.5), rng)
        assert out.k == 3, "the heavy splat should have been split"
        axis = np.linspace(0.0, 1.0, 41)
        grid = np.stack(np.meshgrid(axis, axis, indexing='ij'), axis=-1).reshape(-1, 2)
        before, after = evaluate(model, grid), evaluate(out, grid)
        gap = np.max(np.abs(after - before))
        assert gap <= 1e-2 * np.max(np.abs(before)), f"clone moved f by {gap:.3e}"

    def test_nothing_to_do(self, random_model):
        model = random_model(k=4, d=1, p=1)
        model.m = np.full(4, 0.25)
        out = prune_and_clone(model, OptimizerConfig())
        np.testing.assert_array_equal(out.m, model.m)
        assert out.k == 4

    def test_everything_pruned(self):
        model = SplatModel(GAUSSIAN, v=[[1.0], [1.0]], A=[[[0.1]], [[0.1]]], b=[[0.2], [0.8]], m=[1e-8, 1e-8])
        with pytest.raises(EmptyModel):
            prune_and_clone(model, OptimizerConfig(prune_threshold=1e-6))

    def test_adam_state_follows_reindexing(self, random_model, rng):
        model = random_model(k=2, d=1, p=1)
        state = AdamState.zeros_like(model)
        state.directions(random_grads(rng, model), OptimizerConfig(algorithm='adam'))
        moved = state.reindex(np.array([0, 1, 0]), np.array([False, False, True]))
        np.testing.assert_array_equal(moved.first['v'][:2], state.first['v'])
        assert np.all(moved.first['v'][2] == 0.0) and np.all(moved.second['A'][2] == 0.0)
        assert moved.t == 1


class TestInitialization:
    """Initial splat layouts"""

    def test_uniform_grid(self):
        model = initialize_model('uniform-grid', k=4)
        np.testing.assert_array_equal(model.b.ravel(), [0.0, 0.25, 0.5, 0.75])
        np.testing.assert_array_equal(model.A.ravel(), np.full(4, 0.125))
        np.testing.assert_array_equal(model.v, 0.0)
        np.testing.assert_allclose(model.m, 0.25)

    def test_chebyshev(self):
        model = initialize_model('chebyshev', k=30)
        centers = model.b.ravel()
        np.testing.assert_array_equal(centers, chebyshev_centers(30))
        assert np.all(np.diff(centers) > 0) and centers[0] > 0 and centers[-1] < 1
        assert np.all(model.A > 0)
        # nodes cluster at the ends, so the end widths are the smallest
        assert model.A[0, 0, 0] < model.A[15, 0, 0]

    def test_random_uniform(self, rng):
        model = initialize_model('random-uniform', k=6, d=2, p=3, rng=rng, init_width=0.2)
        assert (model.k, model.d, model.p) == (6, 2, 3)
        np.testing.assert_array_equal(model.A[0], 0.2 * np.eye(2))

    def test_grid_schemes_are_one_dimensional(self):
        with pytest.raises(ValueError, match="one-dimensional"):
            initialize_model('uniform-grid', k=4, d=2)

    def test_unknown_scheme(self):
        with pytest.raises(ValueError, match="Unknown init scheme"):
            initialize_model('sobol', k=4)


class FailingObjective(Objective):
    """Returns a NaN loss from the given call on"""

    name = 'failing'

    def __init__(self, fail_at):
        self.fail_at = fail_at
        self.calls = 0

    def loss(self, model):
        return 1.0

    def loss_and_gradients(self, model):
        self.calls += 1
        loss = float('nan') if self.calls > self.fail_at else 1.0
        return loss, GradientSet.zeros_like(model)


class TestTrain:
    """The training loop and its trace"""

    def test_zero_steps_returns_initial_model(self, regression_problem):
        model, objective = regression_problem
        out, trace = train(model, objective, OptimizerConfig(steps=0))
        np.testing.assert_array_equal(out.v, model.v)
        assert len(trace) == 1 and trace.final.step == 0

    def test_gradient_descent_decreases_loss(self, regression_problem):
        model, objective = regression_problem
        _, trace = train(model, objective, OptimizerConfig(learning_rate=2e-3, steps=1000))
        losses = trace.train_loss
        assert np.all(losses[1:] <= 1.01 * losses[:-1]), "loss increased by more than 1% in one step"
        assert losses[-1] < 0.9 * losses[0], f"loss only went from {losses[0]} to {losses[-1]}"

    def test_multiscale_sine_descent(self):
        """Plain GD at lr 1e-4 on the 30-splat multiscale sine fit descends smoothly"""
        model = initialize_model('uniform-grid', k=30)
        objective = LeastSquaresObjective(gen_data('multiscale_sine', 200, 0.0, 0))
        _, trace = train(model, objective, OptimizerConfig(learning_rate=1e-4, steps=1000))
        losses = trace.train_loss
        rises = np.mean(losses[1:] > losses[:-1])
        assert rises <= 0.01, f"loss rose on {100 * rises:.1f}% of steps"
        moving = np.convolve(losses, np.ones(100) / 100, mode='valid')
        assert np.all(np.diff(moving) <= 1e-12), "100-step moving average of the loss increased"
        assert losses[-1] < losses[0]

    @pytest.mark.parametrize("algorithm", ['gd', 'adam'])
    def test_masses_fixed_without_fisher_rao(self, regression_problem, algorithm):
        model, objective = regression_problem
        cfg = OptimizerConfig(algorithm=algorithm, learning_rate=1e-3, steps=20, birth_death_every=5)
        seen = []
        out, _ = train(model, objective, cfg, callback=lambda t, mdl: seen.append(mdl.m.copy()))
        assert len(seen) == 20
        for masses in seen:
            np.testing.assert_array_equal(masses, model.m)
        np.testing.assert_array_equal(out.m, model.m)

    def test_projection_holds_after_every_step(self, regression_problem):
        model, objective = regression_problem
        sigma_min = 0.05
        cfg = OptimizerConfig(algorithm='adam', learning_rate=0.02, steps=40, sigma_min=sigma_min)
        smallest = []
        train(model, objective, cfg,
              callback=lambda t, mdl: smallest.append(np.linalg.svd(mdl.A, compute_uv=False).min()))
        assert len(smallest) == 40
        assert min(smallest) >= sigma_min * (1 - 1e-12), f"singular value {min(smallest)} below {sigma_min}"

    def test_same_seed_gives_identical_traces(self, regression_problem, tmp_path):
        model, objective = regression_problem
        cfg = OptimizerConfig(algorithm='adam', learning_rate=1e-3, steps=50, fr_enabled=True,
                              birth_death_every=10, batch_size=16, log_every=10)
        first = train(model, objective, cfg)[1].to_csv(tmp_path / 'a.csv')
        second = train(model, objective, cfg)[1].to_csv(tmp_path / 'b.csv')
        assert first.read_bytes() == second.read_bytes()

    def test_trace_schedule(self, regression_problem):
        model, objective = regression_problem
        _, trace = train(model, objective, OptimizerConfig(steps=10, trace_every=5, log_every=100))
        assert [r.step for r in trace.records] == [0, 5, 10]

    def test_validation_column(self, regression_problem):
        model, objective = regression_problem
        validation = Dataset(x=np.linspace(0, 1, 11), y=np.zeros(11))
        _, trace = train(model, objective, OptimizerConfig(steps=4, log_every=2), validation=validation)
        assert list(trace.validation()['step']) == [0, 2, 4]
        assert trace.validation()['val_mse'].iloc[0] == 0.0

    def test_csv_header(self, regression_problem, tmp_path):
        model, objective = regression_problem
        _, trace = train(model, objective, OptimizerConfig(steps=3))
        path = trace.to_csv(tmp_path / 'trace.csv')
        assert path.read_text().splitlines()[0] == 'step,train_loss,val_mse,wall_ms,k_alive'
        frame = pd.read_csv(path)
        assert len(frame) == 4 and (frame['wall_ms'] == 0).all()

    def test_checkpoints(self, regression_problem, tmp_path):
        model, objective = regression_problem
        train(model, objective, OptimizerConfig(steps=5, checkpoint_every=2), checkpoint_dir=tmp_path)
        names = sorted(p.name for p in tmp_path.glob('checkpoint_*.json'))
        assert names == ['checkpoint_0000002.json', 'checkpoint_0000004.json']
        assert load_model(tmp_path / names[0]).k == model.k

    def test_non_finite_loss_reports_step(self, unit_splat):
        with pytest.raises(NonFinite) as info:
            train(unit_splat, FailingObjective(fail_at=3), OptimizerConfig(steps=10))
        assert info.value.step == 3

    def test_callback(self, regression_problem):
        model, objective = regression_problem
        seen = []
        train(model, objective, OptimizerConfig(steps=3), callback=lambda t, mdl: seen.append(t))
        assert seen == [1, 2, 3]

    def test_trace_steps_must_increase(self):
        trace = TrainTrace()
        trace.append(TraceRecord(1, 0.0, float('nan'), 0.0, 1))
        with pytest.raises(ValueError, match="increase"):
            trace.append(TraceRecord(1, 0.0, float('nan'), 0.0, 1))


class TestBirthDeathInTraining:
    """Population changes during training"""

    def test_k_alive_tracks_population(self, rng):
        model = make_random_model(rng, 3, 1, 1)
        model.m = np.array([0.9, 0.1 - 1e-9, 1e-9])
        data = gen_data('sine', 40, 0.0, 0)
        cfg = OptimizerConfig(steps=2, fr_enabled=True, fr_rate=0.0, birth_death_every=1,
                              prune_threshold=1e-6, clone_threshold=0.5)
        out, trace = train(model, LeastSquaresObjective(data), cfg)
        assert [r.k_alive for r in trace.records] == [3, 3, 3]
        assert out.k == 3


@pytest.mark.slow
@pytest.mark.validation
class TestAcceptanceRuns:
    """Full-budget reproductions of the shipped configs"""

    def _fit(self, name, tmp_path):
        assert run(CONFIGS / name, out=str(tmp_path)) == 0
        trace = pd.read_csv(tmp_path / 'trace.csv')
        baselines = pd.read_csv(tmp_path / 'baselines.csv').set_index('method')['mse']
        return trace['val_mse'].iloc[-1], baselines

    def test_multiscale_sine_beats_baselines(self, tmp_path):
        splat_mse, baselines = self._fit('fig1.cfg', tmp_path)
        assert splat_mse < baselines['haar_l8'], f"splats {splat_mse:.3e} vs Haar {baselines['haar_l8']:.3e}"
        assert splat_mse < baselines['chebyshev_m30'], \
            f"splats {splat_mse:.3e} vs Chebyshev {baselines['chebyshev_m30']:.3e}"

    def test_sawtooth_beats_haar(self, tmp_path):
        splat_mse, baselines = self._fit('sawtooth.cfg', tmp_path)
        assert splat_mse < baselines['haar_l8'], f"splats {splat_mse:.3e} vs Haar {baselines['haar_l8']:.3e}"

    def test_allen_cahn_loss_drops_hundredfold(self, tmp_path):
        assert run(CONFIGS / 'allen_cahn_small.cfg', out=str(tmp_path)) == 0
        losses = pd.read_csv(tmp_path / 'trace.csv')['train_loss']
        assert losses.iloc[-1] <= losses.iloc[0] / 100, f"{losses.iloc[0]:.3e} -> {losses.iloc[-1]:.3e}"


@pytest.fixture
def regression_problem():
    """Ten uniform-grid splats and 60 samples of sin(2πx)"""
    model = initialize_model('uniform-grid', k=10)
    return model, LeastSquaresObjective(gen_data('sine', 60, 0.0, 3))


if __name__ == '__main__':
    pytest.main([__file__, '-v'])
