"""
Splat Regression - Loss Functionals
===================================

Concrete losses F(f_μ) together with the parameter gradients the optimizer
consumes:

    least squares    F = (1/n) Σ_j ‖f(x_j) − y_j‖²
    Poisson          F = ½ ‖Δf − g‖²_{L²(Ω)}         (Monte Carlo over Ω)
    Allen-Cahn       F = (1/n) Σ_i (ε²Δu + u − u³ − g)²(x_i)
                       + w_bdy (1/n_b) Σ_j (u(z_j) − u*(z_j))²

The physics-informed gradients never differentiate δF. The Laplacian is
moved onto the splat densities, whose parameter derivatives have closed
forms for a Gaussian mother (Σ = AAᵀ, P = Σ^{-1}, s = P(x − b),
h = |s|² − tr P, z = A^{-1}(x − b)):

    Δρ_{A,b}        = ρ h
    ∂_b Δρ_{A,b}    = ρ (h s − 2 P s)
    ∂_A Δρ_{A,b}    = ρ [h (s zᵀ − A^{-T}) − 2 s (A^{-1}s)ᵀ − 2 (P s) zᵀ + 2 P A^{-T}]

Every objective exposes ``loss`` and ``loss_and_gradients`` so the training
loop is agnostic to which functional it descends.
"""

import logging
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional, Tuple, Union

import numpy as np

from splatreg.errors import DimensionError
from splatreg.gradients import FirstVariation, GradientSet, pullback, weighted_outer, wfr_gradients
from splatreg.model import (SplatModel, evaluate, evaluate_laplacian, gaussian_laplacian_terms,
                            inverse_parts)
from splatreg.parallel import map_chunks, pairwise_sum, point_chunks

logger = logging.getLogger(__name__)

PointFunction = Callable[[np.ndarray], np.ndarray]
RngLike = Union[int, np.random.Generator]


def _column(values: np.ndarray, n: int) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 1:
        values = values[:, None]
    if values.shape[0] != n:
        raise DimensionError(f"expected {n} values, got {values.shape[0]}")
    return values


def _rng(seed: RngLike) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


@dataclass
class Dataset:
    """
    Regression samples (x_j, y_j), j = 1..n.

    Attributes:
        x: (n, d) inputs
        y: (n, p) targets (a 1-D array is read as p = 1)
    """
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        if self.x.ndim == 1:
            self.x = self.x[:, None]
        if self.x.shape[0] < 1:
            raise DimensionError("a dataset needs at least one sample")
        self.y = _column(self.y, self.x.shape[0])

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]

    @property
    def p(self) -> int:
        return self.y.shape[1]

    def subset(self, index: np.ndarray) -> 'Dataset':
        return Dataset(self.x[index], self.y[index])


@dataclass
class CollocationSet:
    """
    Monte Carlo discretization of Ω = [0, 1]^d and its boundary.

    Attributes:
        interior: (n_int, d) points strictly inside Ω
        boundary: (n_bdy, d) points on the faces of Ω
        boundary_values: (n_bdy, p) Dirichlet data u*(z_j)
        forcing: (n_int, p) right-hand side g(x_i)
        interior_weights: (n_int,) quadrature weights vol(Ω)/n_int
        boundary_weights: (n_bdy,) averaging weights 1/n_bdy
    """
    interior: np.ndarray
    boundary: np.ndarray
    boundary_values: np.ndarray
    forcing: np.ndarray
    interior_weights: np.ndarray
    boundary_weights: np.ndarray

    def __post_init__(self):
        self.interior = np.atleast_2d(np.asarray(self.interior, dtype=np.float64))
        self.boundary = np.asarray(self.boundary, dtype=np.float64).reshape(-1, self.interior.shape[1])
        self.forcing = _column(self.forcing, self.interior.shape[0])
        self.boundary_values = _column(self.boundary_values, self.boundary.shape[0])
        self.interior_weights = np.asarray(self.interior_weights, dtype=np.float64).reshape(-1)
        self.boundary_weights = np.asarray(self.boundary_weights, dtype=np.float64).reshape(-1)
        if self.interior_weights.size != self.n_int or self.boundary_weights.size != self.n_bdy:
            raise DimensionError("collocation weights must match the point counts")

    @property
    def n_int(self) -> int:
        return self.interior.shape[0]

    @property
    def n_bdy(self) -> int:
        return self.boundary.shape[0]

    @property
    def d(self) -> int:
        return self.interior.shape[1]


def sample_interior(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    """Uniform points in the open unit cube."""
    return rng.uniform(np.nextafter(0.0, 1.0), 1.0, size=(n, d))


def sample_boundary(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    """Uniform points on ∂[0, 1]^d: a random face, then a uniform point on it."""
    points = rng.uniform(0.0, 1.0, size=(n, d))
    axis = rng.integers(0, d, size=n)
    side = rng.integers(0, 2, size=n).astype(np.float64)
    points[np.arange(n), axis] = side
    return points


def make_collocation(seed: RngLike, n_int: int, n_bdy: int, d: int,
                     forcing: PointFunction, boundary: PointFunction) -> CollocationSet:
    """
    Draw interior and boundary collocation points and tabulate g and u* on them.

    Args:
        seed: integer seed or an existing Generator (advanced in place)
        n_int: interior point count (≥ 1)
        n_bdy: boundary point count (≥ 0)
        d: spatial dimension
        forcing: g, (n, d) -> (n,) or (n, p)
        boundary: u*, (n, d) -> (n,) or (n, p)
    """
    if n_int < 1 or n_bdy < 0 or d < 1:
        raise ValueError(f"invalid collocation sizes n_int={n_int}, n_bdy={n_bdy}, d={d}")
    rng = _rng(seed)
    interior = sample_interior(rng, n_int, d)
    bdy = sample_boundary(rng, n_bdy, d)
    return CollocationSet(
        interior=interior,
        boundary=bdy,
        boundary_values=boundary(bdy) if n_bdy else np.zeros((0, 1)),
        forcing=forcing(interior),
        interior_weights=np.full(n_int, 1.0 / n_int),
        boundary_weights=np.full(n_bdy, 1.0 / n_bdy) if n_bdy else np.zeros(0),
    )


# ---------------------------------------------------------------------------
# Least squares
# ---------------------------------------------------------------------------

def ls_loss(model: SplatModel, data: Dataset) -> float:
    """
    Mean squared error (1/n) Σ_j ‖f(x_j) − y_j‖².

    Example:
        >>> zero = SplatModel(GAUSSIAN, v=[[0.0]], A=[[[1.0]]], b=[[0.0]], m=[1.0])
        >>> ls_loss(zero, Dataset(x=[[0.1], [0.7]], y=[2.0, 2.0]))
        4.0
    """
    residual = evaluate(model, data.x) - data.y
    return float(np.sum(residual ** 2) / data.n)


def ls_first_variation(model: SplatModel, data: Dataset) -> FirstVariation:
    """δF(x_j) = (2/n)(f(x_j) − y_j) on the data points, unit weights."""
    residual = evaluate(model, data.x) - data.y
    return FirstVariation(points=data.x, values=(2.0 / data.n) * residual,
                          weights=np.ones(data.n))


def ls_gradients(model: SplatModel, data: Dataset) -> GradientSet:
    return wfr_gradients(model, ls_first_variation(model, data))


# ---------------------------------------------------------------------------
# Laplacian pullback shared by Poisson and Allen-Cahn
# ---------------------------------------------------------------------------

def laplacian_pullback(model: SplatModel, points: np.ndarray, coeff: np.ndarray) -> GradientSet:
    """
    Uncentered parameter gradients of Σ_j ⟨c_j, Δf(x_j)⟩ per unit mass.

    Args:
        model: Gaussian-mother splat model
        points: (n, d) collocation points
        coeff: (n,) or (n, p) coefficients c_j

    Returns:
        GradientSet whose Fisher-Rao slot holds Σ_j ⟨c_j, v_i⟩ Δρ_i(x_j)
    """
    model.mother.require_laplacian('laplacian_pullback')
    X = np.atleast_2d(points)
    coeff = _column(coeff, X.shape[0])
    inverse = inverse_parts(model)
    A_inv_T = np.swapaxes(inverse[0], 1, 2)

    def chunk(sl: slice) -> GradientSet:
        lap = gaussian_laplacian_terms(model, X[sl], inverse)
        rho, s, h, P = lap.terms.rho, lap.s, lap.h, lap.P
        z, A_inv = lap.terms.z, lap.terms.A_inv
        gv = (rho * h) @ coeff[sl]
        c_rho = (coeff[sl] @ model.v.T).T * rho       # (k, n) ⟨c_j, v_i⟩ ρ_ij
        c_rho_h = c_rho * h
        Ps = np.einsum('kij,knj->kni', P, s)
        A_inv_s = np.einsum('kij,knj->kni', A_inv, s)
        gb = np.einsum('kn,knd->kd', c_rho_h, s) - 2.0 * np.einsum('kn,knd->kd', c_rho, Ps)
        gA = (weighted_outer(c_rho_h, s, z)
              - c_rho_h.sum(axis=1)[:, None, None] * A_inv_T
              - 2.0 * weighted_outer(c_rho, s, A_inv_s)
              - 2.0 * weighted_outer(c_rho, Ps, z)
              + 2.0 * c_rho.sum(axis=1)[:, None, None] * (P @ A_inv_T))
        return GradientSet(gv, gA, gb, c_rho_h.sum(axis=1))

    parts = map_chunks(chunk, point_chunks(X.shape[0], model.k))
    return pairwise_sum(parts, GradientSet.__add__)


def _require_scalar(model: SplatModel, operation: str) -> None:
    model.mother.require_laplacian(operation)
    if model.p != 1:
        raise DimensionError(f"{operation} needs scalar outputs (p = 1), got p = {model.p}")


def _boundary_residual(model: SplatModel, coll: CollocationSet) -> np.ndarray:
    if coll.n_bdy == 0:
        return np.zeros((0, model.p))
    return evaluate(model, coll.boundary) - coll.boundary_values


def _boundary_terms(model: SplatModel, coll: CollocationSet) -> Tuple[float, GradientSet]:
    if coll.n_bdy == 0:
        return 0.0, GradientSet.zeros_like(model)
    residual = _boundary_residual(model, coll)
    weighted = coll.boundary_weights[:, None] * residual
    loss = float(np.sum(weighted * residual))
    return loss, pullback(model, coll.boundary, 2.0 * weighted, np.ones(coll.n_bdy))


def boundary_loss(model: SplatModel, coll: CollocationSet) -> float:
    """Averaged Dirichlet misfit Σ_j w_j ‖u(z_j) − u*(z_j)‖²."""
    residual = _boundary_residual(model, coll)
    return float(np.sum(coll.boundary_weights[:, None] * residual ** 2))


def boundary_gradients(model: SplatModel, coll: CollocationSet) -> GradientSet:
    """Uncentered gradients of ``boundary_loss``."""
    return _boundary_terms(model, coll)[1]


# ---------------------------------------------------------------------------
# Poisson
# ---------------------------------------------------------------------------

def poisson_residual(model: SplatModel, coll: CollocationSet) -> np.ndarray:
    """Δf(x_i) − g(x_i) at the interior points, shape (n_int, 1)."""
    _require_scalar(model, 'poisson_loss')
    return evaluate_laplacian(model, coll.interior) - coll.forcing


def _poisson_terms(model: SplatModel, coll: CollocationSet) -> Tuple[float, GradientSet]:
    residual = poisson_residual(model, coll)
    weighted = coll.interior_weights[:, None] * residual
    loss = float(0.5 * np.sum(weighted * residual))
    return loss, laplacian_pullback(model, coll.interior, weighted)


def poisson_loss(model: SplatModel, coll: CollocationSet) -> float:
    """½ Σ_i w_i (Δf(x_i) − g(x_i))², a Monte Carlo estimate of ½‖Δf − g‖²_{L²(Ω)}."""
    residual = poisson_residual(model, coll)
    return float(0.5 * np.sum(coll.interior_weights[:, None] * residual ** 2))


def poisson_gradients(model: SplatModel, coll: CollocationSet) -> GradientSet:
    """
    WFR gradients of ``poisson_loss``.

    Each splat integrates the residual r = Δf − g against Δρ_i and its
    parameter derivatives:

        gv_i = Σ_j w_j r_j Δρ_i(x_j)
        gb_i = v_i Σ_j w_j r_j ∂_b Δρ_i(x_j)
        gA_i = v_i Σ_j w_j r_j ∂_A Δρ_i(x_j)

    Raises:
        UnsupportedMother: for mother splats without Laplacian evaluators
        DimensionError: if p ≠ 1
    """
    return _poisson_terms(model, coll)[1].centered(model.m)


# ---------------------------------------------------------------------------
# Allen-Cahn
# ---------------------------------------------------------------------------

class AllenCahnLoss(NamedTuple):
    total: float
    interior: float
    boundary: float


def allen_cahn_residual(model: SplatModel, coll: CollocationSet, eps: float) -> Tuple[np.ndarray, np.ndarray]:
    """Return (r, u) with r = ε²Δu + u − u³ − g at the interior points."""
    _require_scalar(model, 'allen_cahn_loss')
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    u = evaluate(model, coll.interior)
    residual = eps ** 2 * evaluate_laplacian(model, coll.interior) + u - u ** 3 - coll.forcing
    return residual, u


def allen_cahn_loss(model: SplatModel, coll: CollocationSet, eps: float,
                    boundary_weight: float = 1.0) -> AllenCahnLoss:
    """
    Interior residual plus boundary misfit for ε²Δu + u − u³ = g.

    Returns:
        AllenCahnLoss(total, interior, boundary) with
        total = interior + boundary_weight · boundary
    """
    residual, _ = allen_cahn_residual(model, coll, eps)
    interior = float(np.sum(coll.interior_weights[:, None] * residual ** 2))
    boundary = boundary_loss(model, coll)
    return AllenCahnLoss(interior + boundary_weight * boundary, interior, boundary)


def allen_cahn_loss_and_gradients(model: SplatModel, coll: CollocationSet, eps: float,
                                  boundary_weight: float = 1.0) -> Tuple[AllenCahnLoss, GradientSet]:
    """
    Loss components and WFR gradients from a single residual evaluation.

    The interior term pulls 2 w_i r_i back through the linearization
    ξ ↦ ε²Δξ + (1 − 3u²)ξ: the (1 − 3u²) part goes through the ordinary
    density pullback, the ε²Δ part through ``laplacian_pullback``.
    """
    residual, u = allen_cahn_residual(model, coll, eps)
    weighted = coll.interior_weights[:, None] * residual
    interior_loss = float(np.sum(weighted * residual))
    boundary_loss_value, boundary_grads = _boundary_terms(model, coll)

    coeff = 2.0 * weighted
    grads = (pullback(model, coll.interior, coeff * (1.0 - 3.0 * u ** 2), np.ones(coll.n_int))
             + laplacian_pullback(model, coll.interior, coeff).scaled(eps ** 2)
             + boundary_grads.scaled(boundary_weight))
    loss = AllenCahnLoss(interior_loss + boundary_weight * boundary_loss_value,
                         interior_loss, boundary_loss_value)
    return loss, grads.centered(model.m)


def allen_cahn_gradients(model: SplatModel, coll: CollocationSet, eps: float,
                         boundary_weight: float = 1.0) -> GradientSet:
    """WFR gradients of ``allen_cahn_loss``."""
    return allen_cahn_loss_and_gradients(model, coll, eps, boundary_weight)[1]


# ---------------------------------------------------------------------------
# Objectives consumed by the training loop
# ---------------------------------------------------------------------------

class Objective:
    """Loss plus gradients on the current data; ``prepare`` runs before every step."""

    name = 'objective'

    def reset(self) -> None:
        """Return to the state right after construction (called when training starts)."""

    def prepare(self, rng: np.random.Generator) -> None:
        pass

    def loss(self, model: SplatModel) -> float:
        raise NotImplementedError

    def loss_and_gradients(self, model: SplatModel) -> Tuple[float, GradientSet]:
        raise NotImplementedError


class LeastSquaresObjective(Objective):
    """
    Least-squares ERM, full batch by default.

    With ``batch_size > 0`` each step uses the next slice of a permutation
    that is reshuffled at every epoch boundary.
    """

    name = 'least_squares'

    def __init__(self, data: Dataset, batch_size: int = 0):
        if batch_size < 0:
            raise ValueError(f"batch_size must be nonnegative, got {batch_size}")
        self.data = data
        self.batch_size = batch_size if 0 < batch_size < data.n else 0
        self._order: Optional[np.ndarray] = None
        self._cursor = 0
        self._batch = data

    def reset(self) -> None:
        self._order = None
        self._cursor = 0
        self._batch = self.data

    def prepare(self, rng: np.random.Generator) -> None:
        if not self.batch_size:
            return
        if self._order is None or self._cursor + self.batch_size > self.data.n:
            self._order = rng.permutation(self.data.n)
            self._cursor = 0
        index = self._order[self._cursor:self._cursor + self.batch_size]
        self._cursor += self.batch_size
        self._batch = self.data.subset(index)

    def loss(self, model: SplatModel) -> float:
        return ls_loss(model, self.data)

    def loss_and_gradients(self, model: SplatModel) -> Tuple[float, GradientSet]:
        residual = evaluate(model, self._batch.x) - self._batch.y
        n = self._batch.n
        fv = FirstVariation(points=self._batch.x, values=(2.0 / n) * residual, weights=np.ones(n))
        return float(np.sum(residual ** 2) / n), wfr_gradients(model, fv)


class CollocationObjective(Objective):
    """PDE objective over a collocation set, optionally redrawn every step."""

    def __init__(self, coll: CollocationSet, forcing: PointFunction, boundary: PointFunction,
                 boundary_weight: float = 1.0, resample: bool = False):
        if boundary_weight < 0:
            raise ValueError(f"boundary_weight must be nonnegative, got {boundary_weight}")
        self.coll = coll
        self._initial = coll
        self.forcing = forcing
        self.boundary = boundary
        self.boundary_weight = boundary_weight
        self.resample = resample

    def reset(self) -> None:
        self.coll = self._initial

    def prepare(self, rng: np.random.Generator) -> None:
        if self.resample:
            self.coll = make_collocation(rng, self.coll.n_int, self.coll.n_bdy, self.coll.d,
                                         self.forcing, self.boundary)


class PoissonObjective(CollocationObjective):
    """½‖Δf − g‖² on the interior plus the weighted boundary misfit."""

    name = 'poisson'

    def loss(self, model: SplatModel) -> float:
        return poisson_loss(model, self.coll) + self.boundary_weight * boundary_loss(model, self.coll)

    def loss_and_gradients(self, model: SplatModel) -> Tuple[float, GradientSet]:
        interior_loss, interior_grads = _poisson_terms(model, self.coll)
        boundary_loss_value, boundary_grads = _boundary_terms(model, self.coll)
        grads = interior_grads + boundary_grads.scaled(self.boundary_weight)
        return (interior_loss + self.boundary_weight * boundary_loss_value,
                grads.centered(model.m))


class AllenCahnObjective(CollocationObjective):
    """Allen-Cahn residual with interface width ``eps`` plus the boundary misfit."""

    name = 'allen_cahn'

    def __init__(self, coll: CollocationSet, forcing: PointFunction, boundary: PointFunction,
                 eps: float, boundary_weight: float = 1.0, resample: bool = False):
        super().__init__(coll, forcing, boundary, boundary_weight, resample)
        if not eps > 0:
            raise ValueError(f"eps must be positive, got {eps}")
        self.eps = eps

    def loss(self, model: SplatModel) -> float:
        return allen_cahn_loss(model, self.coll, self.eps, self.boundary_weight).total

    def loss_and_gradients(self, model: SplatModel) -> Tuple[float, GradientSet]:
        loss, grads = allen_cahn_loss_and_gradients(model, self.coll, self.eps, self.boundary_weight)
        return loss.total, grads
