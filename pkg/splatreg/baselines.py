"""
Splat Regression - One-Dimensional Baselines
============================================

Classical approximants on [0, 1] that trained splat models are compared
against:

    Chebyshev interpolation   m nodes, degree m−1, evaluated by Clenshaw
    Haar projection           L² projection onto piecewise constants on 2^l
                              dyadic cells (scaling coefficient + 2^l − 1 details)

Both are evaluated on the same validation grid as the splat model
(2000 equispaced points by default).
"""

import logging
from dataclasses import dataclass
from typing import Callable, Iterable, Optional

import numpy as np
import pandas as pd
from numpy.polynomial import chebyshev, legendre

logger = logging.getLogger(__name__)

Function1D = Callable[[np.ndarray], np.ndarray]

HAAR_QUADRATURE_POINTS = 64
VALIDATION_POINTS_1D = 2000


def _scalar_values(f: Function1D, x: np.ndarray) -> np.ndarray:
    values = np.asarray(f(x), dtype=np.float64)
    return values.reshape(np.shape(x))


def validation_grid_1d(n: int = VALIDATION_POINTS_1D) -> np.ndarray:
    return np.linspace(0.0, 1.0, n)


@dataclass(frozen=True)
class ChebInterpolant:
    """Chebyshev series of degree m−1 on [0, 1] (argument mapped by t = 2x − 1)"""
    coefficients: np.ndarray

    @property
    def m(self) -> int:
        return self.coefficients.size

    @property
    def nodes(self) -> np.ndarray:
        """Interpolation nodes on [0, 1]."""
        return 0.5 * (chebyshev.chebpts1(self.m) + 1.0)


def cheb_fit(f: Function1D, m: int) -> ChebInterpolant:
    """
    Interpolate f at the m Chebyshev points of the first kind mapped to [0, 1].

    Args:
        f: vectorized evaluator on [0, 1]
        m: number of nodes (≥ 1)

    Example:
        >>> interp = cheb_fit(lambda x: x ** 2, 3)
        >>> float(cheb_eval(interp, 0.3))
        0.09
    """
    if m < 1:
        raise ValueError(f"m must be at least 1, got {m}")
    coefficients = chebyshev.chebinterpolate(lambda t: _scalar_values(f, 0.5 * (t + 1.0)), m - 1)
    return ChebInterpolant(coefficients=np.asarray(coefficients, dtype=np.float64))


def cheb_eval(interp: ChebInterpolant, x: np.ndarray) -> np.ndarray:
    """Evaluate the interpolant (Clenshaw recurrence via ``chebval``)."""
    return chebyshev.chebval(2.0 * np.asarray(x, dtype=np.float64) - 1.0, interp.coefficients)


@dataclass(frozen=True)
class HaarApproximation:
    """
    Haar projection at level l.

    ``coefficients`` holds the orthonormal discrete Haar transform of the
    2^l cell averages: the scaling coefficient first, then detail
    coefficients from the coarsest to the finest scale.
    """
    level: int
    coefficients: np.ndarray

    @property
    def n_params(self) -> int:
        return self.coefficients.size

    def cell_values(self) -> np.ndarray:
        return haar_inverse(self.coefficients)


def haar_forward(values: np.ndarray) -> np.ndarray:
    """Orthonormal fast Haar transform of a length-2^l vector."""
    a = np.asarray(values, dtype=np.float64)
    details = []
    while a.size > 1:
        even, odd = a[0::2], a[1::2]
        details.append((even - odd) / np.sqrt(2.0))
        a = (even + odd) / np.sqrt(2.0)
    return np.concatenate([a] + details[::-1])


def haar_inverse(coefficients: np.ndarray) -> np.ndarray:
    """Inverse of ``haar_forward``."""
    coefficients = np.asarray(coefficients, dtype=np.float64)
    a = coefficients[:1]
    position = 1
    while position < coefficients.size:
        d = coefficients[position:position + a.size]
        position += a.size
        out = np.empty(2 * a.size)
        out[0::2] = (a + d) / np.sqrt(2.0)
        out[1::2] = (a - d) / np.sqrt(2.0)
        a = out
    return a


def cell_averages(f: Function1D, level: int, quad_points: int = HAAR_QUADRATURE_POINTS) -> np.ndarray:
    """Gauss-Legendre averages of f over the 2^level dyadic cells of [0, 1]."""
    n_cells = 2 ** level
    t, w = legendre.leggauss(quad_points)
    left = np.arange(n_cells)[:, None]
    x = (left + 0.5 * (t[None, :] + 1.0)) / n_cells
    values = _scalar_values(f, x.ravel()).reshape(x.shape)
    return 0.5 * values @ w


def haar_fit(f: Function1D, level: int, quad_points: int = HAAR_QUADRATURE_POINTS) -> HaarApproximation:
    """
    L²([0, 1]) projection of f onto the Haar basis through ``level``.

    Args:
        f: vectorized evaluator on [0, 1]
        level: finest scale l ≥ 1 (2^l coefficients)
        quad_points: Gauss-Legendre points per cell

    Example:
        >>> h = haar_fit(lambda x: (x >= 0.5).astype(float), 1)
        >>> haar_eval(h, np.array([0.25, 0.75]))
        array([0., 1.])
    """
    if level < 1:
        raise ValueError(f"level must be at least 1, got {level}")
    if quad_points < HAAR_QUADRATURE_POINTS:
        raise ValueError(f"use at least {HAAR_QUADRATURE_POINTS} quadrature points per cell")
    return HaarApproximation(level=level, coefficients=haar_forward(cell_averages(f, level, quad_points)))


def haar_eval(h: HaarApproximation, x: np.ndarray) -> np.ndarray:
    """Piecewise-constant evaluation; x = 1 belongs to the last cell."""
    x = np.asarray(x, dtype=np.float64)
    n_cells = 2 ** h.level
    cell = np.clip(np.floor(x * n_cells).astype(int), 0, n_cells - 1)
    return h.cell_values()[cell]


def mse_on_grid(approximant: Function1D, f: Function1D, grid: Optional[np.ndarray] = None) -> float:
    grid = validation_grid_1d() if grid is None else grid
    return float(np.mean((approximant(grid) - _scalar_values(f, grid)) ** 2))


def baseline_table(f: Function1D, haar_levels: Iterable[int] = (8,), cheb_nodes: Iterable[int] = (30,),
                   grid: Optional[np.ndarray] = None) -> pd.DataFrame:
    """
    Baseline errors as a ``method,params,mse`` table.

    Chebyshev rows appear twice: once counting the m coefficients and once
    counting the node locations as parameters too (2m).
    """
    grid = validation_grid_1d() if grid is None else grid
    rows = []
    for level in haar_levels:
        h = haar_fit(f, level)
        rows.append({'method': f'haar_l{level}', 'params': h.n_params,
                     'mse': mse_on_grid(lambda x: haar_eval(h, x), f, grid)})
    for m in cheb_nodes:
        interp = cheb_fit(f, m)
        mse = mse_on_grid(lambda x: cheb_eval(interp, x), f, grid)
        rows.append({'method': f'chebyshev_m{m}', 'params': m, 'mse': mse})
        rows.append({'method': f'chebyshev_m{m}_with_nodes', 'params': 2 * m, 'mse': mse})
    logger.debug("Computed %d baseline rows on a %d-point grid", len(rows), grid.size)
    return pd.DataFrame(rows, columns=['method', 'params', 'mse'])
