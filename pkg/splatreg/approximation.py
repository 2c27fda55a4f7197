"""
Splat Regression - Constructive Universal Approximation
=======================================================

Random-sample construction behind the quantitative approximation result:
draw x_1, ..., x_k ~ U(Ω), Ω = [0, 1]^d, and place one splat on each,

    v_i = f(x_i),  b_i = x_i,  A_i = ε I,  m_i = 1/k

so that f_μ(x) = (1/k) Σ_i f(x_i) ε^{−d} ρ((x − x_i)/ε). The sup-norm error
over a dense grid is the measured quantity; its trend in (ε, k) is what the
result predicts, the constants are not checked.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
import pandas as pd

from splatreg.errors import DimensionError
from splatreg.model import SplatModel, evaluate
from splatreg.mother import GAUSSIAN, MotherSplat

logger = logging.getLogger(__name__)

VectorFunction = Callable[[np.ndarray], np.ndarray]


def _values(f: VectorFunction, X: np.ndarray) -> np.ndarray:
    values = np.asarray(f(X), dtype=np.float64)
    return values[:, None] if values.ndim == 1 else values


@dataclass
class ConstructionSpec:
    """
    Attributes:
        target: f, (n, d) -> (n,) or (n, p)
        d: input dimension of Ω = [0, 1]^d
        eps: bandwidth ε > 0
        k: splat count
        seed: sampling seed
    """
    target: VectorFunction
    d: int
    eps: float
    k: int
    seed: int = 0
    mother: MotherSplat = GAUSSIAN

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        if self.k < 1:
            raise ValueError(f"k must be at least 1, got {self.k}")
        if self.d < 1:
            raise ValueError(f"d must be at least 1, got {self.d}")


def build_construction(spec: ConstructionSpec) -> SplatModel:
    """Sample the k-splat model of the constructive approximation argument."""
    rng = np.random.default_rng(spec.seed)
    centers = rng.uniform(0.0, 1.0, size=(spec.k, spec.d))
    return SplatModel(
        spec.mother,
        v=_values(spec.target, centers),
        A=np.tile(spec.eps * np.eye(spec.d), (spec.k, 1, 1)),
        b=centers,
        m=np.full(spec.k, 1.0 / spec.k),
    )


def tensor_grid(n_per_axis: int, d: int) -> np.ndarray:
    """n_per_axis^d equispaced points of [0, 1]^d, shape (n, d)."""
    axis = np.linspace(0.0, 1.0, n_per_axis)
    mesh = np.meshgrid(*([axis] * d), indexing='ij')
    return np.stack([g.ravel() for g in mesh], axis=1)


def sup_error(model: SplatModel, f: VectorFunction, n_per_axis: int = 2001, d: Optional[int] = None) -> float:
    """
    max_x ‖f_μ(x) − f(x)‖₂ over an equispaced grid of [0, 1]^d.

    Args:
        model: splat model on R^d
        f: reference function
        n_per_axis: grid points per axis (2001 in 1-D, coarser in 2-D)
        d: grid dimension (defaults to the model's)

    Raises:
        DimensionError: if the grid, model and f disagree in dimension
    """
    d = model.d if d is None else d
    if d != model.d:
        raise DimensionError(f"grid dimension {d} does not match model dimension {model.d}")
    grid = tensor_grid(n_per_axis, d)
    reference = _values(f, grid)
    if reference.shape[1] != model.p:
        raise DimensionError(f"f has {reference.shape[1]} outputs, model has {model.p}")
    gap = evaluate(model, grid) - reference
    return float(np.max(np.linalg.norm(gap, axis=1)))


def approx_bound_table(f: VectorFunction, d: int, eps_values: Sequence[float],
                       k_values: Sequence[int], seeds: Iterable[int],
                       n_per_axis: int = 2001) -> pd.DataFrame:
    """
    Sup errors of the construction for every (ε, k, seed) combination,
    as an ``eps,k,seed,sup_error`` table.
    """
    if len(eps_values) != len(k_values):
        raise ValueError("eps_values and k_values must pair up one-to-one")
    seeds = list(seeds)
    rows = []
    for eps, k in zip(eps_values, k_values):
        for seed in seeds:
            model = build_construction(ConstructionSpec(f, d, float(eps), int(k), int(seed)))
            err = sup_error(model, f, n_per_axis)
            rows.append({'eps': float(eps), 'k': int(k), 'seed': int(seed), 'sup_error': err})
            logger.debug("eps=%g k=%d seed=%d sup_error=%.4e", eps, k, seed, err)
    return pd.DataFrame(rows, columns=['eps', 'k', 'seed', 'sup_error'])


def median_sup_errors(table: pd.DataFrame) -> pd.DataFrame:
    """Median sup error over seeds for every (ε, k) pair."""
    return table.groupby(['eps', 'k'], as_index=False)['sup_error'].median()
