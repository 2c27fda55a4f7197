"""
Splat Regression - Mother Splats
================================

A mother splat is the isotropic base density ρ (zero mean, identity
covariance) that every splat pushes forward through x ↦ Az + b. The
module exposes the four evaluators the rest of the package needs:

    ρ(z), ∇log ρ(z), Δρ(z), ∇(Δρ)(z)

All evaluators act on the last axis of ``z`` so that arrays of shape
(..., d) are handled in one call.
"""

from dataclasses import dataclass
from typing import Callable, Dict, Optional

import numpy as np

from splatreg.errors import UnsupportedMother

Evaluator = Callable[[np.ndarray], np.ndarray]

LOG_2PI = np.log(2.0 * np.pi)


def _gaussian_density(z: np.ndarray) -> np.ndarray:
    d = z.shape[-1]
    r2 = np.einsum('...i,...i->...', z, z)
    return np.exp(-0.5 * r2 - 0.5 * d * LOG_2PI)


def _gaussian_grad_log(z: np.ndarray) -> np.ndarray:
    return -z


def _gaussian_laplacian(z: np.ndarray) -> np.ndarray:
    d = z.shape[-1]
    r2 = np.einsum('...i,...i->...', z, z)
    return _gaussian_density(z) * (r2 - d)


def _gaussian_grad_laplacian(z: np.ndarray) -> np.ndarray:
    d = z.shape[-1]
    r2 = np.einsum('...i,...i->...', z, z)
    scale = _gaussian_density(z) * (2.0 + d - r2)
    return scale[..., None] * z


@dataclass(frozen=True)
class MotherSplat:
    """
    Base density ρ with its derivative evaluators.

    Attributes:
        kind: registry name ('gaussian')
        density: ρ(z)
        grad_log: ∇log ρ(z)
        laplacian: Δρ(z), or None when the kind has no closed form
        grad_laplacian: ∇(Δρ)(z), or None
        rotation_invariant: True when ρ depends on |z| only; Bures-Wasserstein
            geometry is exact only in that case
        sub_exponential: True when the integration-by-parts gradient formulas
            hold without boundary corrections
    """
    kind: str
    density: Evaluator
    grad_log: Evaluator
    laplacian: Optional[Evaluator] = None
    grad_laplacian: Optional[Evaluator] = None
    rotation_invariant: bool = True
    sub_exponential: bool = True

    def require_laplacian(self, operation: str) -> None:
        """Reject kinds that cannot serve physics-informed losses."""
        if self.laplacian is None or self.grad_laplacian is None or not self.sub_exponential:
            raise UnsupportedMother(
                f"{operation} needs a sub-exponential mother splat with Laplacian "
                f"evaluators; '{self.kind}' does not provide them"
            )

    @property
    def is_gaussian(self) -> bool:
        return self.kind == 'gaussian'


GAUSSIAN = MotherSplat(
    kind='gaussian',
    density=_gaussian_density,
    grad_log=_gaussian_grad_log,
    laplacian=_gaussian_laplacian,
    grad_laplacian=_gaussian_grad_laplacian,
)

MOTHER_SPLATS: Dict[str, MotherSplat] = {
    'gaussian': GAUSSIAN,
}


def get_mother(kind: str) -> MotherSplat:
    """
    Look up a mother splat by name (case-insensitive).

    Raises:
        UnsupportedMother: if the kind is not registered
    """
    key = kind.strip().lower()
    if key not in MOTHER_SPLATS:
        available = ', '.join(sorted(MOTHER_SPLATS))
        raise UnsupportedMother(f"Mother splat '{kind}' not found. Available: {available}")
    return MOTHER_SPLATS[key]
