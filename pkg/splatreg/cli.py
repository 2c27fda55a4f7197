"""
Splat Regression - Command Line Driver
======================================

    splatreg <subcommand> --config <path> [--out <dir>] [--log-level LEVEL]

Subcommands: fit, pde, baseline, gradcheck, approx-bound, geodesic, and
run (dispatches on the config's ``experiment`` key).

Every run writes ``manifest.json`` (resolved config, library versions,
seeds) and ``run.log`` into the output directory, plus the experiment's
own CSV/JSON artifacts.

Exit codes: 0 success, 1 numerical failure or gradcheck FAIL,
2 configuration error, 3 I/O error.
"""

import argparse
import json
import logging
import platform
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import scipy

import splatreg
from splatreg.approximation import approx_bound_table, median_sup_errors, tensor_grid
from splatreg.baselines import baseline_table, validation_grid_1d
from splatreg.config import ExperimentConfig, load_config, resolve_target
from splatreg.errors import (ConfigError, EmptyModel, NonFinite, NonPsdIntermediate, SingularSplat,
                             UnknownTarget, UnsupportedMother)
from splatreg.geometry import BwPoint, bw_distance, gaussian_w2, geodesic_table
from splatreg.gradients import GradientSet, gradient_check
from splatreg.losses import (AllenCahnObjective, CollocationObjective, Dataset, LeastSquaresObjective,
                             PoissonObjective, allen_cahn_gradients, allen_cahn_loss, ls_gradients,
                             ls_loss, make_collocation, poisson_gradients, poisson_loss)
from splatreg.model import SplatModel, save_model
from splatreg.mother import GAUSSIAN, get_mother
from splatreg.optimize import initialize_model, train
from splatreg.targets import (forcing_function, gen_data, manufactured_splat, solution_function)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_NUMERICAL = 1
EXIT_CONFIG = 2
EXIT_IO = 3

SUBCOMMANDS = ('fit', 'pde', 'baseline', 'gradcheck', 'approx-bound', 'geodesic')
CSV_FLOAT_FORMAT = '%.17g'


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------

def _write_csv(frame: pd.DataFrame, path: Path) -> Path:
    frame.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT)
    logger.info("Wrote %s", path)
    return path


def write_manifest(config: ExperimentConfig, out_dir: Path, extra: Optional[dict] = None) -> Path:
    """Resolved config, library versions and seeds for reproducing the run."""
    manifest = {
        'experiment': config.experiment,
        'config_source': config.source,
        'config': config.to_dict(),
        'seeds': {'seed': config.seed,
                  'data_seed': config.data.data_seed if config.data.data_seed is not None else config.seed},
        'versions': {
            'splatreg': splatreg.__version__,
            'python': platform.python_version(),
            'numpy': np.__version__,
            'scipy': scipy.__version__,
            'pandas': pd.__version__,
        },
    }
    if extra:
        manifest.update(extra)
    path = out_dir / 'manifest.json'
    path.write_text(json.dumps(manifest, indent=1, default=str))
    return path


def _validation_set(fn: Callable[[np.ndarray], np.ndarray], d: int, n_per_axis: int) -> Dataset:
    """Noise-free validation grid: equispaced in 1-D, tensor grid otherwise."""
    X = validation_grid_1d(n_per_axis)[:, None] if d == 1 else tensor_grid(n_per_axis, d)
    return Dataset(x=X, y=fn(X))


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------

def run_fit(config: ExperimentConfig, out_dir: Path) -> int:
    """Least-squares regression of a registry target."""
    data_spec, model_spec = config.data, config.model
    target = resolve_target(data_spec)
    data_seed = data_spec.data_seed if data_spec.data_seed is not None else config.seed
    data = gen_data(target, data_spec.n, data_spec.noise_sigma, data_seed, d=data_spec.d)
    validation = _validation_set(target, data_spec.d, data_spec.validation_points)

    rng = np.random.default_rng(config.seed)
    model = initialize_model(model_spec.init, model_spec.k, d=data_spec.d, p=1, rng=rng,
                             mother=get_mother(model_spec.mother), init_width=model_spec.init_width)
    logger.info("Fitting %s: n=%d, noise_sigma=%g, k=%d, init=%s, step budget=%d",
                target.name, data.n, data_spec.noise_sigma, model.k, model_spec.init,
                config.optimizer.steps)

    objective = LeastSquaresObjective(data, batch_size=config.optimizer.batch_size)
    model, trace = train(model, objective, config.optimizer, validation=validation,
                         checkpoint_dir=out_dir / 'checkpoints')
    trace.to_csv(out_dir / 'trace.csv')
    save_model(model, out_dir / 'model.json')

    n_params = model.k * (model.p + model.d ** 2 + model.d + 1)
    summary = pd.DataFrame([{'method': f'splat_k{model.k}', 'params': n_params,
                             'mse': trace.final.val_mse}])
    if data_spec.d == 1:
        baselines = baseline_table(target, config.baseline.haar_levels, config.baseline.cheb_nodes,
                                   validation.x[:, 0])
        _write_csv(baselines, out_dir / 'baselines.csv')
        summary = pd.concat([summary, baselines], ignore_index=True)
    print(summary.to_string(index=False))
    write_manifest(config, out_dir, {'final_val_mse': trace.final.val_mse,
                                     'final_train_loss': trace.final.train_loss})
    return EXIT_OK


def build_pde_problem(config: ExperimentConfig,
                      rng: np.random.Generator) -> Tuple[CollocationObjective, Optional[Dataset]]:
    """Collocation objective plus the validation set against the reference solution."""
    pde, d = config.pde, config.data.d
    splat = manufactured_splat(d, width=pde.manufactured_width)
    forcing = forcing_function(pde.forcing, pde.pde_kind, d, pde.eps, splat, pde.forcing_table)
    boundary = solution_function(pde.boundary, d, pde.eps, splat, pde.boundary_table)
    coll = make_collocation(rng, pde.n_int, pde.n_bdy, d, forcing, boundary)

    if pde.pde_kind == 'poisson':
        objective = PoissonObjective(coll, forcing, boundary, pde.boundary_weight,
                                     pde.resample_collocation)
    else:
        objective = AllenCahnObjective(coll, forcing, boundary, pde.eps, pde.boundary_weight,
                                       pde.resample_collocation)

    validation = None
    if pde.reference != 'none':
        reference = solution_function(pde.reference, d, pde.eps, splat)
        validation = _validation_set(reference, d, config.data.validation_points)
    return objective, validation


def run_pde(config: ExperimentConfig, out_dir: Path) -> int:
    """Physics-informed training (Poisson or Allen-Cahn) on [0, 1]^d."""
    rng = np.random.default_rng(config.seed)
    objective, validation = build_pde_problem(config, rng)
    model = initialize_model(config.model.init, config.model.k, d=config.data.d, p=1, rng=rng,
                             mother=get_mother(config.model.mother), init_width=config.model.init_width)
    logger.info("Solving %s with eps=%g, n_int=%d, n_bdy=%d, k=%d, step budget=%d",
                config.pde.pde_kind, config.pde.eps, config.pde.n_int, config.pde.n_bdy,
                model.k, config.optimizer.steps)

    initial_loss = objective.loss(model)
    model, trace = train(model, objective, config.optimizer, validation=validation,
                         checkpoint_dir=out_dir / 'checkpoints')
    trace.to_csv(out_dir / 'trace.csv')
    save_model(model, out_dir / 'model.json')

    final_loss = trace.final.train_loss
    ratio = final_loss / initial_loss if initial_loss > 0 else float('nan')
    print(f"initial loss {initial_loss:.6e}  final loss {final_loss:.6e}  ratio {ratio:.3e}  "
          f"val_mse {trace.final.val_mse:.6e}")
    write_manifest(config, out_dir, {'initial_loss': initial_loss, 'final_loss': final_loss})
    return EXIT_OK


def run_baseline(config: ExperimentConfig, out_dir: Path) -> int:
    """Chebyshev and Haar errors of a 1-D target on the validation grid."""
    target = resolve_target(config.data)
    if config.data.d != 1:
        raise ConfigError('d', "baselines are one-dimensional")
    table = baseline_table(target, config.baseline.haar_levels, config.baseline.cheb_nodes,
                           validation_grid_1d(config.data.validation_points))
    _write_csv(table, out_dir / 'baselines.csv')
    print(table.to_string(index=False))
    write_manifest(config, out_dir)
    return EXIT_OK


def random_instance(rng: np.random.Generator, loss: str, k_max: int, d_max: int, p_max: int,
                    n: int) -> Tuple[SplatModel, Callable[[SplatModel], float], GradientSet]:
    """
    Random small problem for gradient checking.

    Returns:
        (model, scalar loss evaluator, analytic gradients at the model)
    """
    k = int(rng.integers(1, k_max + 1))
    if loss == 'least_squares':
        d = int(rng.integers(1, d_max + 1))
        p = int(rng.integers(1, p_max + 1))
    else:
        d, p = 2, 1
    A = 0.3 * np.eye(d) + 0.05 * rng.standard_normal((k, d, d))
    model = SplatModel(GAUSSIAN, v=rng.standard_normal((k, p)), A=A,
                       b=rng.uniform(0.0, 1.0, size=(k, d)), m=rng.dirichlet(np.full(k, 5.0)))

    if loss == 'least_squares':
        data = Dataset(x=rng.uniform(0.0, 1.0, size=(n, d)), y=rng.standard_normal((n, p)))
        return model, lambda mdl: ls_loss(mdl, data), ls_gradients(model, data)

    def forcing(X: np.ndarray) -> np.ndarray:
        return np.sin(np.pi * X[:, 0]) * X[:, 1]

    def boundary(X: np.ndarray) -> np.ndarray:
        return X[:, 0] - X[:, 1]

    coll = make_collocation(rng, n, max(1, n // 2), d, forcing, boundary)
    if loss == 'poisson':
        return model, lambda mdl: poisson_loss(mdl, coll), poisson_gradients(model, coll)
    eps = 0.1
    return (model, lambda mdl: allen_cahn_loss(mdl, coll, eps).total,
            allen_cahn_gradients(model, coll, eps))


def run_gradcheck(config: ExperimentConfig, out_dir: Optional[Path] = None) -> int:
    """Compare analytic gradients with central differences on random instances."""
    spec = config.gradcheck
    rng = np.random.default_rng(config.seed)
    rows: List[Dict[str, object]] = []
    for instance in range(spec.gradcheck_instances):
        model, loss_fn, grads = random_instance(rng, spec.gradcheck_loss, spec.gradcheck_k,
                                                spec.gradcheck_d, spec.gradcheck_p, spec.gradcheck_n)
        errors = gradient_check(model, loss_fn, grads, step=spec.fd_step)
        centering = abs(float(np.dot(model.m, grads.gfr)))
        for block, err in errors.items():
            rows.append({'instance': instance, 'k': model.k, 'd': model.d, 'p': model.p,
                         'block': block, 'rel_error': err, 'centering': centering})

    table = pd.DataFrame(rows)
    worst = table.groupby('block', sort=False)['rel_error'].max()
    passed = bool((worst <= spec.gradcheck_threshold).all())
    for block, err in worst.items():
        verdict = 'PASS' if err <= spec.gradcheck_threshold else 'FAIL'
        print(f"{block}: max relative error {err:.3e}  {verdict}")
    print(f"{spec.gradcheck_loss}: {'PASS' if passed else 'FAIL'} at threshold {spec.gradcheck_threshold:g}")
    if out_dir is not None:
        _write_csv(table, out_dir / 'gradcheck.csv')
        write_manifest(config, out_dir, {'passed': passed})
    return EXIT_OK if passed else EXIT_NUMERICAL


def run_approx_bound(config: ExperimentConfig, out_dir: Path) -> int:
    """Sup error of the random-sample construction over (eps, k, seed)."""
    spec = config.approx
    target = resolve_target(config.data)
    table = approx_bound_table(target, config.data.d, spec.approx_eps, spec.approx_k,
                               spec.approx_seeds, spec.approx_grid)
    _write_csv(table, out_dir / 'approx_bound.csv')
    print(median_sup_errors(table).to_string(index=False))
    write_manifest(config, out_dir)
    return EXIT_OK


def run_geodesic(config: ExperimentConfig, out_dir: Path) -> int:
    """Sample the Bures-Wasserstein geodesic between two configured splats."""
    spec = config.geodesic
    P = BwPoint(spec.geodesic_a0, spec.geodesic_b0)
    Q = BwPoint(spec.geodesic_a1, spec.geodesic_b1)
    table = geodesic_table(P, Q, np.linspace(0.0, 1.0, spec.geodesic_points))
    _write_csv(table, out_dir / 'geodesic.csv')
    distance = bw_distance(P, Q)
    oracle = gaussian_w2(P.b, P.covariance, Q.b, Q.covariance)
    print(f"W2 = {distance:.12g}  (closed-form Gaussian oracle {oracle:.12g})")
    write_manifest(config, out_dir, {'distance': distance, 'oracle_distance': oracle})
    return EXIT_OK


EXPERIMENT_RUNNERS: Dict[str, Callable[[ExperimentConfig, Path], int]] = {
    'fit': run_fit,
    'pde': run_pde,
    'baseline': run_baseline,
    'gradcheck': run_gradcheck,
    'approx-bound': run_approx_bound,
    'geodesic': run_geodesic,
}


# ---------------------------------------------------------------------------
# Entry points
# ---------------------------------------------------------------------------

class _RunLogging:
    """Attach console and run.log handlers to the package logger for one run."""

    def __init__(self, level: str):
        self.level = getattr(logging, level.upper(), logging.INFO)
        self.package_logger = logging.getLogger('splatreg')
        self.handlers: List[logging.Handler] = []
        self.previous_level = self.package_logger.level

    def __enter__(self) -> '_RunLogging':
        console = logging.StreamHandler(sys.stderr)
        console.setFormatter(logging.Formatter('%(levelname)s %(name)s: %(message)s'))
        self._add(console)
        self.package_logger.setLevel(self.level)
        return self

    def _add(self, handler: logging.Handler) -> None:
        handler.setLevel(self.level)
        self.package_logger.addHandler(handler)
        self.handlers.append(handler)

    def to_file(self, path: Path) -> None:
        handler = logging.FileHandler(path, mode='w')
        handler.setFormatter(logging.Formatter('%(asctime)s %(levelname)s %(name)s: %(message)s'))
        self._add(handler)

    def __exit__(self, *exc_info) -> None:
        for handler in self.handlers:
            self.package_logger.removeHandler(handler)
            handler.close()
        self.package_logger.setLevel(self.previous_level)


def _default_out(config: ExperimentConfig, config_path: Path) -> Path:
    return Path(config.out) if config.out else Path('runs') / config_path.stem


def run(config_path, out: Optional[str] = None, experiment: Optional[str] = None,
        log_level: str = 'INFO') -> int:
    """
    Run one experiment from a config file.

    Args:
        config_path: flat key = value config
        out: output directory (defaults to the config's ``out`` or runs/<config stem>)
        experiment: subcommand overriding the config's ``experiment`` key
        log_level: logging level name

    Returns:
        process exit code (0 ok, 1 numerical/gradcheck failure, 2 config error, 3 I/O error)
    """
    config_path = Path(config_path)
    with _RunLogging(log_level) as run_logging:
        try:
            config = load_config(config_path)
        except (ConfigError, UnknownTarget, UnsupportedMother) as exc:
            logger.error("Configuration error: %s", exc)
            return EXIT_CONFIG
        except OSError as exc:
            logger.error("Cannot read config %s: %s", config_path, exc)
            return EXIT_IO

        kind = experiment or config.experiment
        if kind != config.experiment:
            logger.warning("Config %s declares experiment '%s'; running '%s'",
                           config_path, config.experiment, kind)
            config.experiment = kind

        out_dir = Path(out) if out else _default_out(config, config_path)
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
            run_logging.to_file(out_dir / 'run.log')
        except OSError as exc:
            logger.error("Cannot create output directory %s: %s", out_dir, exc)
            return EXIT_IO

        try:
            return EXPERIMENT_RUNNERS[kind](config, out_dir)
        except (NonFinite, SingularSplat, NonPsdIntermediate, EmptyModel) as exc:
            logger.error("Numerical failure: %s", exc)
            return EXIT_NUMERICAL
        except (ConfigError, UnknownTarget, UnsupportedMother, ValueError) as exc:
            logger.error("Configuration error: %s", exc)
            return EXIT_CONFIG
        except OSError as exc:
            logger.error("I/O error: %s", exc)
            return EXIT_IO


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='splatreg',
                                     description='Splat regression experiments')
    parser.add_argument('--version', action='version', version=f'%(prog)s {splatreg.__version__}')
    subparsers = parser.add_subparsers(dest='command', required=True)
    for name in ('run',) + SUBCOMMANDS:
        sub = subparsers.add_parser(name, help='run the experiment named in the config'
                                    if name == 'run' else f'{name} experiment')
        sub.add_argument('--config', required=True, help='flat key = value config file')
        sub.add_argument('--out', default=None, help='output directory')
        sub.add_argument('--log-level', default='INFO',
                         choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'], help='logging verbosity')
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    experiment = None if args.command == 'run' else args.command
    return run(args.config, out=args.out, experiment=experiment, log_level=args.log_level)


if __name__ == '__main__':
    sys.exit(main())
