"""
Splat Regression - Splats and k-Splat Models
============================================

A k-splat model is the finite mixture

    f(x) = Σ_i m_i v_i ρ(A_i^{-1}(x - b_i)) |det A_i^{-1}|

of affine pushforwards ρ_{A_i,b_i} of a mother splat ρ, each weighted by an
output vector v_i ∈ R^p and a mass m_i ≥ 0.

Parameters are stored stacked (v: (k, p), A: (k, d, d), b: (k, d),
m: (k,)) so evaluation and gradients vectorise over splats; ``splats``
gives the ordered per-atom view. Every evaluator accepts a single point
of shape (d,) or a batch of shape (n, d).
"""

import json
from dataclasses import dataclass
from pathlib import Path
from typing import List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from splatreg.errors import DimensionError, SingularSplat, UnsupportedMother
from splatreg.mother import GAUSSIAN, MotherSplat, get_mother
from splatreg.parallel import map_chunks, point_chunks

FORMAT_VERSION = 1
DET_FLOOR = 1e-12

PathLike = Union[str, Path]


@dataclass
class Splat:
    """One mixture atom: output vector v, affine matrix A, center b, mass m"""
    v: np.ndarray
    A: np.ndarray
    b: np.ndarray
    m: float = 1.0


@dataclass
class SplatModel:
    """
    Mother splat plus stacked splat parameters.

    Attributes:
        mother: base density shared by every splat
        v: (k, p) output vectors
        A: (k, d, d) affine matrices
        b: (k, d) centers
        m: (k,) masses
        det_floor: smallest admissible |det A_i|
    """
    mother: MotherSplat
    v: np.ndarray
    A: np.ndarray
    b: np.ndarray
    m: np.ndarray
    det_floor: float = DET_FLOOR

    def __post_init__(self):
        self.v = np.array(self.v, dtype=np.float64, ndmin=2)
        self.A = np.array(self.A, dtype=np.float64)
        self.b = np.array(self.b, dtype=np.float64, ndmin=2)
        self.m = np.array(self.m, dtype=np.float64, ndmin=1)
        k = self.v.shape[0]
        if self.A.ndim != 3 or self.A.shape[1] != self.A.shape[2]:
            raise DimensionError(f"A must have shape (k, d, d), got {self.A.shape}")
        d = self.A.shape[1]
        if self.A.shape[0] != k or self.b.shape != (k, d) or self.m.shape != (k,):
            raise DimensionError(
                f"inconsistent splat shapes: v {self.v.shape}, A {self.A.shape}, "
                f"b {self.b.shape}, m {self.m.shape}"
            )
        if np.any(self.m < 0):
            raise ValueError(f"masses must be nonnegative, got min {self.m.min()}")

    @classmethod
    def from_splats(cls, splats: Sequence[Splat], mother: MotherSplat = GAUSSIAN,
                    det_floor: float = DET_FLOOR) -> 'SplatModel':
        if not splats:
            raise DimensionError("a splat model needs at least one splat")
        return cls(
            mother=mother,
            v=np.stack([np.atleast_1d(np.asarray(s.v, dtype=np.float64)) for s in splats]),
            A=np.stack([np.atleast_2d(np.asarray(s.A, dtype=np.float64)) for s in splats]),
            b=np.stack([np.atleast_1d(np.asarray(s.b, dtype=np.float64)) for s in splats]),
            m=np.array([s.m for s in splats], dtype=np.float64),
            det_floor=det_floor,
        )

    @property
    def k(self) -> int:
        return self.v.shape[0]

    @property
    def d(self) -> int:
        return self.A.shape[1]

    @property
    def p(self) -> int:
        return self.v.shape[1]

    @property
    def splats(self) -> List[Splat]:
        return [Splat(v=self.v[i].copy(), A=self.A[i].copy(), b=self.b[i].copy(), m=float(self.m[i]))
                for i in range(self.k)]

    def copy(self) -> 'SplatModel':
        return SplatModel(self.mother, self.v.copy(), self.A.copy(), self.b.copy(),
                          self.m.copy(), self.det_floor)

    def select(self, index: np.ndarray) -> 'SplatModel':
        """Model made of the splats at ``index`` (fancy indexing, may repeat)."""
        return SplatModel(self.mother, self.v[index], self.A[index], self.b[index],
                          self.m[index], self.det_floor)


class PairTerms(NamedTuple):
    """Per (splat, point) quantities shared by evaluation and gradients"""
    z: np.ndarray         # (k, n, d) A_i^{-1}(x_j - b_i)
    rho: np.ndarray       # (k, n) ρ_{A_i,b_i}(x_j)
    grad_log: np.ndarray  # (k, n, d) ∇_x log ρ_{A_i,b_i}(x_j)
    A_inv: np.ndarray     # (k, d, d)


def _as_points(model: SplatModel, x: np.ndarray) -> np.ndarray:
    X = np.asarray(x, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != model.d:
        raise DimensionError(f"points must have shape (n, {model.d}), got {np.shape(x)}")
    return X


def inverse_parts(model: SplatModel):
    """
    Inverse matrices and |det A_i^{-1}| for every splat.

    Raises:
        SingularSplat: if any |det A_i| < det_floor
    """
    det = np.linalg.det(model.A)
    bad = np.flatnonzero(~(np.abs(det) >= model.det_floor))
    if bad.size:
        i = int(bad[0])
        raise SingularSplat(i, float(abs(det[i])), model.det_floor)
    return np.linalg.inv(model.A), 1.0 / np.abs(det)


def _densities(model: SplatModel, X: np.ndarray, inverse) -> Tuple[np.ndarray, np.ndarray]:
    """(z, ρ) for all splats at points X; the only place ρ_{A,b} is normalized."""
    A_inv, inv_det = inverse
    y = X[None, :, :] - model.b[:, None, :]
    z = np.einsum('kij,knj->kni', A_inv, y)
    return z, model.mother.density(z) * inv_det[:, None]


def pair_terms(model: SplatModel, X: np.ndarray, inverse=None) -> PairTerms:
    """Evaluate z, ρ_{A,b} and ∇_x log ρ_{A,b} for all splats at points X (n, d)."""
    inverse = inverse if inverse is not None else inverse_parts(model)
    z, rho = _densities(model, X, inverse)
    A_inv = inverse[0]
    grad_log = np.einsum('kji,knj->kni', A_inv, model.mother.grad_log(z))
    return PairTerms(z=z, rho=rho, grad_log=grad_log, A_inv=A_inv)


def splat_density(model: SplatModel, x: np.ndarray) -> np.ndarray:
    """Per-splat densities ρ_{A_i,b_i}(x_j) as a (k, n) array."""
    X = _as_points(model, x)
    return _densities(model, X, inverse_parts(model))[1]


def evaluate(model: SplatModel, x: np.ndarray) -> np.ndarray:
    """
    Evaluate the splat model at a batch of points.

    Args:
        model: the k-splat model
        x: (n, d) points (a single (d,) point is promoted to (1, d))

    Returns:
        (n, p) array f(x_j)

    Raises:
        SingularSplat: if any |det A_i| < det_floor
    """
    X = _as_points(model, x)
    inverse = inverse_parts(model)
    weights = model.m[:, None] * model.v

    def chunk(sl: slice) -> np.ndarray:
        return _densities(model, X[sl], inverse)[1].T @ weights

    parts = map_chunks(chunk, point_chunks(X.shape[0], model.k))
    return np.concatenate(parts, axis=0)


def eval(model: SplatModel, x: np.ndarray) -> np.ndarray:  # noqa: A001
    """
    f(x) = Σ m_i v_i ρ(A_i^{-1}(x − b_i)) |det A_i^{-1}| at one point.

    Example:
        >>> model = SplatModel(GAUSSIAN, v=[[1.0]], A=[[[1.0]]], b=[[0.0]], m=[1.0])
        >>> eval(model, [0.0])   # 1/√(2π)
        array([0.39894228])
    """
    return evaluate(model, np.asarray(x, dtype=np.float64).reshape(1, -1))[0]


def evaluate_grad_x(model: SplatModel, x: np.ndarray) -> np.ndarray:
    """Jacobians of f at a batch of points, shape (n, p, d)."""
    X = _as_points(model, x)
    inverse = inverse_parts(model)
    weights = model.m[:, None] * model.v

    def chunk(sl: slice) -> np.ndarray:
        terms = pair_terms(model, X[sl], inverse)
        grad_rho = terms.rho[:, :, None] * terms.grad_log
        return np.einsum('kp,knd->npd', weights, grad_rho)

    parts = map_chunks(chunk, point_chunks(X.shape[0], model.k))
    return np.concatenate(parts, axis=0)


def eval_grad_x(model: SplatModel, x: np.ndarray) -> np.ndarray:
    """Jacobian of f at one point, shape (p, d)."""
    return evaluate_grad_x(model, np.asarray(x, dtype=np.float64).reshape(1, -1))[0]


class GaussianLaplacianTerms(NamedTuple):
    """Closed-form pieces of Δρ_{A,b} for a Gaussian mother (Σ = AAᵀ, P = Σ^{-1})"""
    terms: PairTerms
    s: np.ndarray      # (k, n, d) P (x − b) = −∇_x log ρ_{A,b}
    h: np.ndarray      # (k, n) |s|² − tr P, so Δρ_{A,b} = ρ_{A,b} h
    P: np.ndarray      # (k, d, d)


def gaussian_laplacian_terms(model: SplatModel, X: np.ndarray, inverse=None) -> GaussianLaplacianTerms:
    """
    Pieces of Δρ_{A,b}(x) = ρ_{A,b}(x)(‖Σ^{-1}(x − b)‖² − tr Σ^{-1}).

    Raises:
        UnsupportedMother: for non-Gaussian mother splats
    """
    if not model.mother.is_gaussian:
        raise UnsupportedMother(
            f"closed-form Laplacians need a Gaussian mother splat, got '{model.mother.kind}'"
        )
    terms = pair_terms(model, X, inverse)
    P = np.einsum('kji,kjl->kil', terms.A_inv, terms.A_inv)
    s = -terms.grad_log
    h = np.einsum('knd,knd->kn', s, s) - np.trace(P, axis1=1, axis2=2)[:, None]
    return GaussianLaplacianTerms(terms=terms, s=s, h=h, P=P)


def evaluate_laplacian(model: SplatModel, x: np.ndarray) -> np.ndarray:
    """Laplacian Δf at a batch of points, shape (n, p)."""
    X = _as_points(model, x)
    model.mother.require_laplacian('eval_laplacian')
    inverse = inverse_parts(model)
    weights = model.m[:, None] * model.v

    def chunk(sl: slice) -> np.ndarray:
        lap = gaussian_laplacian_terms(model, X[sl], inverse)
        return (lap.terms.rho * lap.h).T @ weights

    parts = map_chunks(chunk, point_chunks(X.shape[0], model.k))
    return np.concatenate(parts, axis=0)


def eval_laplacian(model: SplatModel, x: np.ndarray) -> np.ndarray:
    """Σ m_i v_i Δρ_{A_i,b_i}(x) at one point, shape (p,)."""
    return evaluate_laplacian(model, np.asarray(x, dtype=np.float64).reshape(1, -1))[0]


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def model_to_dict(model: SplatModel) -> dict:
    return {
        'version': FORMAT_VERSION,
        'd': model.d,
        'p': model.p,
        'mother': model.mother.kind,
        'splats': [
            {
                'v': model.v[i].tolist(),
                'A': model.A[i].tolist(),
                'b': model.b[i].tolist(),
                'm': float(model.m[i]),
            }
            for i in range(model.k)
        ],
    }


def model_from_dict(doc: dict, det_floor: float = DET_FLOOR) -> SplatModel:
    version = doc.get('version')
    if version != FORMAT_VERSION:
        raise ValueError(f"Unsupported splat model version {version!r}, expected {FORMAT_VERSION}")
    splats = [Splat(v=np.asarray(s['v']), A=np.asarray(s['A']), b=np.asarray(s['b']), m=s['m'])
              for s in doc['splats']]
    model = SplatModel.from_splats(splats, mother=get_mother(doc['mother']), det_floor=det_floor)
    if model.d != doc['d'] or model.p != doc['p']:
        raise DimensionError(
            f"header dims (d={doc['d']}, p={doc['p']}) disagree with splats (d={model.d}, p={model.p})"
        )
    return model


def model_to_json(model: SplatModel) -> str:
    """Versioned JSON document; float repr round-trips 64-bit values exactly."""
    return json.dumps(model_to_dict(model), indent=1)


def model_from_json(text: str, det_floor: float = DET_FLOOR) -> SplatModel:
    return model_from_dict(json.loads(text), det_floor=det_floor)


def save_model(model: SplatModel, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(model_to_json(model))
    return path


def load_model(path: PathLike, det_floor: Optional[float] = None) -> SplatModel:
    return model_from_json(Path(path).read_text(), det_floor=det_floor or DET_FLOOR)
