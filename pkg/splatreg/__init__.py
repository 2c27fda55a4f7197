"""
Splat Regression
================

Mixtures of anisotropic Gaussian "splats" as a regression function class,
trained by Wasserstein-Fisher-Rao gradient descent, with physics-informed
losses, Bures-Wasserstein geometry and classical 1-D baselines.

    >>> from splatreg import initialize_model, gen_data, LeastSquaresObjective, OptimizerConfig, train
    >>> data = gen_data('multiscale_sine', n=200, sigma=0.0, seed=0)
    >>> model = initialize_model('uniform-grid', k=30)
    >>> model, trace = train(model, LeastSquaresObjective(data), OptimizerConfig(steps=100))
"""

import logging

from splatreg.errors import (ConfigError, DimensionError, EmptyModel, NonFinite, NonPsdIntermediate,
                             SingularSplat, SplatError, UnknownTarget, UnsupportedMother)
from splatreg.mother import GAUSSIAN, MotherSplat, get_mother
from splatreg.model import (Splat, SplatModel, eval, eval_grad_x, eval_laplacian, evaluate,
                            load_model, save_model)
from splatreg.geometry import BwPoint, bw_distance, bw_geodesic, bw_transport_map
from splatreg.gradients import (FirstVariation, GradientSet, fd_gradient_oracle, particle_gradients,
                                wfr_gradients)
from splatreg.losses import (AllenCahnObjective, CollocationSet, Dataset, LeastSquaresObjective,
                             PoissonObjective, allen_cahn_gradients, allen_cahn_loss, ls_first_variation,
                             ls_loss, make_collocation, poisson_gradients, poisson_loss)
from splatreg.optimize import (OptimizerConfig, TrainTrace, initialize_model, prune_and_clone, step,
                               train)
from splatreg.baselines import cheb_eval, cheb_fit, haar_eval, haar_fit
from splatreg.approximation import ConstructionSpec, build_construction, sup_error
from splatreg.targets import gen_data, get_target

__version__ = '0.1.0'

logging.getLogger(__name__).addHandler(logging.NullHandler())
