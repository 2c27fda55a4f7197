"""
Splat Regression - Target Functions and Synthetic Data
======================================================

Registry of the target functions used by the experiments, the noisy
sampler ``gen_data`` and the named forcing/boundary functions of the PDE
experiments.

Targets (all on [0, 1]^d):
    multiscale_sine   sin(20πx(2 − x))                   d = 1
    sawtooth          2(6x mod 1) − 1                    d = 1
    sine              sin(2πx)                           d = 1
    step              1{x ≥ 0.5}                         d = 1
    linear            x                                  d = 1
    sin_cos_2d        sin(3π√x) cos(3πy)                 d = 2
    tanh_interface    tanh((x₁ − 0.5)/(√2 ε))            any d (parameter eps)
    zero              0                                  any d
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, Optional, Union

import numpy as np
import pandas as pd
from scipy import interpolate

from splatreg.errors import ConfigError, UnknownTarget
from splatreg.losses import Dataset
from splatreg.model import SplatModel, evaluate, evaluate_laplacian
from splatreg.mother import GAUSSIAN

logger = logging.getLogger(__name__)

PointFunction = Callable[[np.ndarray], np.ndarray]

PDE_KINDS = ('poisson', 'allen_cahn')
DATA_SOURCES = ('zero', 'manufactured-splat', 'tanh-interface', 'tabulated')


@dataclass(frozen=True)
class Target:
    """
    Attributes:
        name: registry key
        fn: vectorized evaluator (n, d) -> (n,)
        d: input dimension (None = any)
    """
    name: str
    fn: PointFunction
    d: Optional[int] = 1

    def __call__(self, x: np.ndarray) -> np.ndarray:
        X = np.asarray(x, dtype=np.float64)
        if X.ndim == 1:
            X = X[:, None]
        return self.fn(X)


def _tanh_interface(eps: float) -> PointFunction:
    if not eps > 0:
        raise ValueError(f"tanh_interface needs eps > 0, got {eps}")
    scale = np.sqrt(2.0) * eps
    return lambda X: np.tanh((X[:, 0] - 0.5) / scale)


def _tanh_interface_laplacian(eps: float) -> PointFunction:
    scale = np.sqrt(2.0) * eps

    def laplacian(X: np.ndarray) -> np.ndarray:
        u = np.tanh((X[:, 0] - 0.5) / scale)
        return -u * (1.0 - u ** 2) / eps ** 2

    return laplacian


TARGETS: Dict[str, Callable[..., Target]] = {
    'multiscale_sine': lambda: Target('multiscale_sine',
                                      lambda X: np.sin(20.0 * np.pi * X[:, 0] * (2.0 - X[:, 0]))),
    'sawtooth': lambda: Target('sawtooth', lambda X: 2.0 * np.mod(6.0 * X[:, 0], 1.0) - 1.0),
    'sine': lambda: Target('sine', lambda X: np.sin(2.0 * np.pi * X[:, 0])),
    'step': lambda: Target('step', lambda X: (X[:, 0] >= 0.5).astype(np.float64)),
    'linear': lambda: Target('linear', lambda X: X[:, 0].copy()),
    'sin_cos_2d': lambda: Target('sin_cos_2d',
                                 lambda X: np.sin(3.0 * np.pi * np.sqrt(X[:, 0])) * np.cos(3.0 * np.pi * X[:, 1]),
                                 d=2),
    'tanh_interface': lambda eps=0.1: Target('tanh_interface', _tanh_interface(eps), d=None),
    'zero': lambda: Target('zero', lambda X: np.zeros(X.shape[0]), d=None),
}


def get_target(name: str, **params) -> Target:
    """
    Look up a registered target.

    Raises:
        UnknownTarget: if ``name`` is not registered

    Example:
        >>> get_target('sawtooth')(np.array([0.0, 1.0 / 12.0]))
        array([-1.,  0.])
    """
    key = name.strip().lower()
    if key not in TARGETS:
        raise UnknownTarget(f"Target '{name}' not found. Available: {', '.join(sorted(TARGETS))}")
    return TARGETS[key](**params)


def gen_data(target: Union[str, Target], n: int, sigma: float, seed: int,
             d: Optional[int] = None, **params) -> Dataset:
    """
    Sample y_j = f(x_j) + ε_j with x_j ~ U[0, 1]^d and ε_j ~ N(0, σ²).

    Args:
        target: registry name or Target
        n: sample count
        sigma: noise standard deviation (σ² = 0.01 means sigma = 0.1)
        seed: sampling seed
        d: input dimension for dimension-free targets (default 1)

    Raises:
        UnknownTarget: for unregistered names
    """
    target = get_target(target, **params) if isinstance(target, str) else target
    if n < 1:
        raise ValueError(f"n must be at least 1, got {n}")
    if sigma < 0:
        raise ValueError(f"sigma must be nonnegative, got {sigma}")
    d = target.d or d or 1
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.0, 1.0, size=(n, d))
    y = target(x)
    if sigma > 0:
        y = y + sigma * rng.standard_normal(y.shape)
    return Dataset(x=x, y=y)


# ---------------------------------------------------------------------------
# PDE data
# ---------------------------------------------------------------------------

def manufactured_splat(d: int, width: float = 0.1, center: Optional[np.ndarray] = None,
                       value: float = 1.0) -> SplatModel:
    """Single Gaussian splat u* used as a manufactured solution."""
    center = np.full(d, 0.5) if center is None else np.asarray(center, dtype=np.float64)
    return SplatModel(GAUSSIAN, v=[[value]], A=[width * np.eye(d)], b=[center], m=[1.0])


def tabulated_function(path: Union[str, Path]) -> PointFunction:
    """
    Interpolant of tabulated point values.

    The CSV holds columns x0, ..., x{d-1} and ``value``. One-dimensional
    tables are interpolated linearly with constant extrapolation; higher
    dimensions use piecewise-linear interpolation on the Delaunay
    triangulation with nearest-neighbour values outside the hull.
    """
    path = Path(path)
    try:
        table = pd.read_csv(path)
    except (OSError, pd.errors.ParserError) as exc:
        raise ConfigError('table', f"cannot read tabulated data {path}: {exc}") from exc
    coords = [c for c in table.columns if c.startswith('x')]
    if 'value' not in table.columns or not coords:
        raise ConfigError('table', f"{path} needs columns x0..x(d-1) and value")
    points = table[sorted(coords)].to_numpy(dtype=np.float64)
    values = table['value'].to_numpy(dtype=np.float64)

    if points.shape[1] == 1:
        order = np.argsort(points[:, 0])
        fn = interpolate.interp1d(points[order, 0], values[order], bounds_error=False,
                                  fill_value=(values[order][0], values[order][-1]))
        return lambda X: fn(np.asarray(X)[:, 0])

    linear = interpolate.LinearNDInterpolator(points, values)
    nearest = interpolate.NearestNDInterpolator(points, values)

    def fn_nd(X: np.ndarray) -> np.ndarray:
        out = linear(X)
        missing = np.isnan(out)
        if np.any(missing):
            out[missing] = nearest(X[missing])
        return out

    return fn_nd


def pde_operator(kind: str, eps: float, u: PointFunction, laplacian: PointFunction) -> PointFunction:
    """Apply the PDE operator (Δ for Poisson, ε²Δ + u − u³ for Allen-Cahn) to a known u."""
    if kind == 'poisson':
        return laplacian
    if kind == 'allen_cahn':
        return lambda X: eps ** 2 * laplacian(X) + u(X) - u(X) ** 3
    raise ConfigError('pde_kind', f"unknown PDE kind '{kind}'. Use one of {', '.join(PDE_KINDS)}")


def solution_function(source: str, d: int, eps: float,
                      splat: Optional[SplatModel] = None,
                      table: Optional[Union[str, Path]] = None) -> PointFunction:
    """Named boundary data u*; 'tabulated' reads ``table``."""
    source = source.strip().lower()
    if source == 'zero':
        return lambda X: np.zeros(X.shape[0])
    if source == 'tanh-interface':
        return _tanh_interface(eps)
    if source == 'manufactured-splat':
        splat = splat if splat is not None else manufactured_splat(d)
        return lambda X: evaluate(splat, X)[:, 0]
    if source == 'tabulated':
        if table is None:
            raise ConfigError('boundary_table', "tabulated boundary data needs a table path")
        return tabulated_function(table)
    raise ConfigError('boundary', f"unknown source '{source}'. Use one of {', '.join(DATA_SOURCES)}")


def forcing_function(source: str, kind: str, d: int, eps: float,
                     splat: Optional[SplatModel] = None,
                     table: Optional[Union[str, Path]] = None) -> PointFunction:
    """
    Named right-hand side g.

    'tanh-interface' and 'manufactured-splat' apply the PDE operator to the
    corresponding known function, so that function solves the problem
    exactly (for Allen-Cahn the tanh interface gives g ≡ 0).
    """
    source = source.strip().lower()
    if source == 'zero':
        return lambda X: np.zeros(X.shape[0])
    if source == 'tanh-interface':
        return pde_operator(kind, eps, _tanh_interface(eps), _tanh_interface_laplacian(eps))
    if source == 'manufactured-splat':
        splat = splat if splat is not None else manufactured_splat(d)
        return pde_operator(kind, eps, lambda X: evaluate(splat, X)[:, 0],
                            lambda X: evaluate_laplacian(splat, X)[:, 0])
    if source == 'tabulated':
        if table is None:
            raise ConfigError('forcing_table', "tabulated forcing needs a table path")
        return tabulated_function(table)
    raise ConfigError('forcing', f"unknown source '{source}'. Use one of {', '.join(DATA_SOURCES)}")
