"""
Splat Regression - Bures-Wasserstein Geometry
=============================================

Splats ρ_{A,b} = (A(·) + b)_# ρ of a centered isotropic mother splat form a
geodesically convex subset of Wasserstein space on which W2 reduces to the
Bures-Wasserstein metric

    W2²(ρ_{A,b}, ρ_{R,s}) = ‖b − s‖² + ‖A‖_F² + ‖R‖_F² − 2‖AᵀR‖_*

The distance depends on A only through AAᵀ when ρ is rotation invariant
(the Gaussian case); for other mother splats it is an approximation and a
warning is emitted.

The shape term is evaluated in its Procrustes form min_Q ‖A − RQ‖_F² over
orthogonal Q, which equals the nuclear-norm expression and stays
nonnegative in floating point.
"""

import logging
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import linalg

from splatreg.errors import DimensionError, NonPsdIntermediate, SingularSplat
from splatreg.model import DET_FLOOR, SplatModel
from splatreg.mother import MotherSplat

logger = logging.getLogger(__name__)

EIGEN_FLOOR = 1e-14


@dataclass(frozen=True)
class BwPoint:
    """Coordinates (A, b) of the splat ρ_{A,b} on the Bures-Wasserstein manifold"""
    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=np.float64))
        b = np.atleast_1d(np.asarray(self.b, dtype=np.float64))
        if A.shape != (b.size, b.size):
            raise DimensionError(f"A must be ({b.size}, {b.size}) to match b, got {A.shape}")
        object.__setattr__(self, 'A', A)
        object.__setattr__(self, 'b', b)

    @property
    def d(self) -> int:
        return self.b.size

    @property
    def covariance(self) -> np.ndarray:
        """AAᵀ, the covariance of ρ_{A,b} for an identity-covariance mother"""
        return self.A @ self.A.T

    def validate(self, det_floor: float = DET_FLOOR) -> 'BwPoint':
        det = abs(np.linalg.det(self.A))
        if not det >= det_floor:
            raise SingularSplat(-1, float(det), det_floor)
        return self


def splat_point(model: SplatModel, i: int) -> BwPoint:
    """Bures-Wasserstein coordinates of splat ``i`` of a model."""
    return BwPoint(model.A[i], model.b[i])


def _check_pair(P: BwPoint, Q: BwPoint, mother: Optional[MotherSplat]) -> None:
    if P.d != Q.d:
        raise DimensionError(f"points live in different dimensions: {P.d} vs {Q.d}")
    if mother is not None and not mother.rotation_invariant:
        warnings.warn(
            f"mother splat '{mother.kind}' is not rotation invariant; the Bures-Wasserstein "
            "distance is only an approximation of W2 for it"
        )


def sym_sqrt(S: np.ndarray, inverse: bool = False) -> np.ndarray:
    """
    Square root (or inverse square root) of a symmetric PSD matrix.

    Eigenvalues are floored at 1e-14 before taking roots.

    Raises:
        NonPsdIntermediate: if S is not finite or has a clearly negative eigenvalue
    """
    S = 0.5 * (S + S.T)
    if not np.all(np.isfinite(S)):
        raise NonPsdIntermediate("symmetric square root of a non-finite matrix")
    try:
        w, U = linalg.eigh(S)
    except linalg.LinAlgError as exc:
        raise NonPsdIntermediate(f"eigendecomposition failed: {exc}") from exc
    scale = max(float(np.max(np.abs(w))), 1.0)
    if w.min() < -1e-8 * scale:
        raise NonPsdIntermediate(f"matrix is not PSD (smallest eigenvalue {w.min():.3e})")
    w = np.maximum(w, EIGEN_FLOOR)
    root = np.sqrt(w)
    if inverse:
        root = 1.0 / root
    return (U * root) @ U.T


def bw_distance_squared(P: BwPoint, Q: BwPoint, mother: Optional[MotherSplat] = None) -> float:
    """Squared Bures-Wasserstein distance between two splats."""
    _check_pair(P, Q, mother)
    translation = float(np.sum((P.b - Q.b) ** 2))
    # Procrustes alignment: RᵀA = U S Vᵀ, best Q = U Vᵀ
    U, _, Vt = np.linalg.svd(Q.A.T @ P.A)
    shape = float(np.sum((P.A - Q.A @ (U @ Vt)) ** 2))
    return translation + shape


def bw_distance(P: BwPoint, Q: BwPoint, mother: Optional[MotherSplat] = None) -> float:
    """
    Bures-Wasserstein distance W2(ρ_{A,b}, ρ_{R,s}).

    Example:
        >>> bw_distance(BwPoint(np.eye(2), [0, 0]), BwPoint(np.eye(2), [1, 0]))
        1.0
        >>> bw_distance(BwPoint(2 * np.eye(2), [0, 0]), BwPoint(np.eye(2), [0, 0]))  # √2
        1.4142135623730951
    """
    return float(np.sqrt(bw_distance_squared(P, Q, mother)))


def bw_distance_nuclear(P: BwPoint, Q: BwPoint) -> float:
    """Distance from the literal ‖b−s‖² + ‖A‖_F² + ‖R‖_F² − 2‖AᵀR‖_* expression."""
    value = (np.sum((P.b - Q.b) ** 2) + np.sum(P.A ** 2) + np.sum(Q.A ** 2)
             - 2.0 * np.linalg.norm(P.A.T @ Q.A, ord='nuc'))
    return float(np.sqrt(max(value, 0.0)))


def gaussian_w2(mean0: np.ndarray, cov0: np.ndarray, mean1: np.ndarray, cov1: np.ndarray) -> float:
    """
    Closed-form W2 between N(mean0, cov0) and N(mean1, cov1):

        ‖m0 − m1‖² + tr(Σ0 + Σ1 − 2(Σ0^{1/2} Σ1 Σ0^{1/2})^{1/2})
    """
    root0 = np.real(linalg.sqrtm(cov0))
    cross = np.real(linalg.sqrtm(root0 @ cov1 @ root0))
    value = np.sum((np.asarray(mean0) - np.asarray(mean1)) ** 2) + np.trace(cov0 + cov1 - 2.0 * cross)
    return float(np.sqrt(max(value, 0.0)))


def bw_transport_map(P: BwPoint, Q: BwPoint,
                     det_floor: float = DET_FLOOR) -> Tuple[np.ndarray, np.ndarray]:
    """
    Optimal transport map T(x) = Mx + c pushing ρ_P forward to ρ_Q.

    With S0 = (A0A0ᵀ)^{1/2} and Σ1 = A1A1ᵀ,

        M = S0^{-1} (S0 Σ1 S0)^{1/2} S0^{-1},   c = b1 − M b0

    M is symmetric positive definite (the gradient of a convex function),
    and reduces to A0^{-1}(A0 Σ1 A0)^{1/2}A0^{-1} when A0 is itself
    symmetric positive definite.

    Returns:
        (M, c)

    Raises:
        SingularSplat: if P is not invertible
        NonPsdIntermediate: if a symmetric square root fails

    Example:
        >>> M, c = bw_transport_map(BwPoint([[1.0]], [0.0]), BwPoint([[2.0]], [3.0]))
        >>> float(M[0, 0]), float(c[0])
        (2.0, 3.0)
    """
    _check_pair(P, Q, None)
    P.validate(det_floor)
    cov0 = P.covariance
    S0 = sym_sqrt(cov0)
    S0_inv = sym_sqrt(cov0, inverse=True)
    middle = sym_sqrt(S0 @ Q.covariance @ S0)
    M = S0_inv @ middle @ S0_inv
    M = 0.5 * (M + M.T)
    c = Q.b - M @ P.b
    return M, c


def transport_cost(P: BwPoint, M: np.ndarray, c: np.ndarray) -> float:
    """E‖X − T(X)‖² for X ~ ρ_P and the affine map T(x) = Mx + c."""
    I = np.eye(P.d)
    mean_gap = (I - M) @ P.b - c
    return float(np.sum(mean_gap ** 2) + np.sum(((I - M) @ P.A) ** 2))


def bw_geodesic(P: BwPoint, Q: BwPoint, t: float) -> BwPoint:
    """
    Point at time t on the geodesic ρ_t = ((1−t) id + t T)_# ρ_P.

    Returns coordinates (((1−t)I + tM) A0, (1−t) b0 + t (c + M b0)). The
    endpoints reproduce P and Q up to a right orthogonal factor of A.

    Example:
        >>> mid = bw_geodesic(BwPoint([[1.0]], [0.0]), BwPoint([[3.0]], [2.0]), 0.5)
        >>> float(mid.A[0, 0]), float(mid.b[0])
        (2.0, 1.0)
    """
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t must be in [0, 1], got {t}")
    M, c = bw_transport_map(P, Q)
    step = (1.0 - t) * np.eye(P.d) + t * M
    return BwPoint(step @ P.A, (1.0 - t) * P.b + t * (c + M @ P.b))


def geodesic_table(P: BwPoint, Q: BwPoint, ts: Sequence[float]) -> pd.DataFrame:
    """
    Sampled geodesic as a table: t, A entries (row-major), b entries, and
    the distance from the start point.
    """
    rows = []
    for t in ts:
        G = bw_geodesic(P, Q, float(t))
        row = {'t': float(t)}
        for i in range(P.d):
            for j in range(P.d):
                row[f'a_{i}{j}'] = G.A[i, j]
        for i in range(P.d):
            row[f'b_{i}'] = G.b[i]
        row['distance_from_start'] = bw_distance(P, G)
        rows.append(row)
    logger.debug("Sampled %d geodesic points between splats of dimension %d", len(rows), P.d)
    return pd.DataFrame(rows)
