"""
Splat Regression - Training Loop
================================

Explicit discretization of the Wasserstein-Fisher-Rao gradient flow

    v̇ = −∇_v F,   Ȧ = −∇_A F,   ḃ = −∇_b F,   ṁ = −m ∇^{FR} F

with either plain gradient descent or Adam (applied blockwise to v, A, b),
an invertibility projection on every A_i, multiplicative-exponential mass
updates and birth-death resampling of the splat population.

Initialization schemes:
    uniform-grid    v_i = 0, b_i = (i−1)/k, A_i = 1/(2k)                (d = 1)
    chebyshev       Chebyshev nodes mapped to [0, 1], A_i = |b_{i+1} − b_{i−1}|/2  (d = 1)
    random-uniform  v_i = 0, b_i ~ U[0, 1]^d, A_i = 0.1·I
"""

import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from tqdm import tqdm

from splatreg.errors import EmptyModel, NonFinite
from splatreg.gradients import GradientSet
from splatreg.losses import Dataset, Objective, ls_loss
from splatreg.model import SplatModel, save_model
from splatreg.mother import GAUSSIAN, MotherSplat

logger = logging.getLogger(__name__)

ALGORITHMS = ('gd', 'adam')
INIT_SCHEMES = ('uniform-grid', 'chebyshev', 'random-uniform')
TRACE_COLUMNS = ['step', 'train_loss', 'val_mse', 'wall_ms', 'k_alive']


@dataclass
class OptimizerConfig:
    """
    Optimizer and training-loop settings.

    Attributes:
        algorithm: 'gd' (no momentum) or 'adam'
        learning_rate: step size η > 0
        beta1, beta2, adam_eps: Adam moment decay rates and denominator guard
        steps: number of parameter updates
        fr_enabled: run the Fisher-Rao mass dynamics and birth-death
        fr_rate: step size of the multiplicative mass update
        prune_threshold: splats lighter than this are removed
        clone_threshold: splats heavier than this are split in two
        clone_scale: clone offset as a fraction of the smallest singular value of A
        birth_death_every: steps between prune/clone passes (fr_enabled only)
        sigma_min: lower bound on the singular values of every A_i
        seed: seed for minibatch order, collocation redraws and clone directions
        log_every: steps between validation evaluations
        trace_every: steps between trace records (validation steps are always recorded)
        checkpoint_every: steps between model checkpoints (0 disables)
        batch_size: least-squares minibatch size (0 = full batch)
        record_wall_time: fill the trace's wall_ms column (off keeps traces bit-reproducible)
        progress: show a tqdm progress bar
    """
    algorithm: str = 'gd'
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    steps: int = 1000
    fr_enabled: bool = False
    fr_rate: float = 0.1
    prune_threshold: float = 1e-6
    clone_threshold: float = 0.5
    clone_scale: float = 1e-3
    birth_death_every: int = 100
    sigma_min: float = 1e-6
    seed: int = 0
    log_every: int = 1000
    trace_every: int = 1
    checkpoint_every: int = 0
    batch_size: int = 0
    record_wall_time: bool = False
    progress: bool = False

    def __post_init__(self):
        self.algorithm = self.algorithm.strip().lower()
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"Unknown algorithm '{self.algorithm}'. Use one of {', '.join(ALGORITHMS)}")
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        for name in ('beta1', 'beta2'):
            value = getattr(self, name)
            if not 0.0 <= value < 1.0:
                raise ValueError(f"{name} must be in [0, 1), got {value}")
        if not self.adam_eps > 0:
            raise ValueError(f"adam_eps must be positive, got {self.adam_eps}")
        if self.steps < 0:
            raise ValueError(f"steps must be nonnegative, got {self.steps}")
        if not self.sigma_min > 0:
            raise ValueError(f"sigma_min must be positive, got {self.sigma_min}")
        if self.fr_rate < 0:
            raise ValueError(f"fr_rate must be nonnegative, got {self.fr_rate}")
        if not 0.0 <= self.prune_threshold < self.clone_threshold:
            raise ValueError(
                f"need 0 <= prune_threshold < clone_threshold, got "
                f"{self.prune_threshold} and {self.clone_threshold}"
            )
        if self.log_every < 1 or self.trace_every < 1:
            raise ValueError(f"log_every and trace_every must be at least 1, got "
                             f"{self.log_every} and {self.trace_every}")
        if self.checkpoint_every < 0 or self.batch_size < 0 or self.birth_death_every < 0:
            raise ValueError("checkpoint_every, batch_size and birth_death_every must be nonnegative")


@dataclass
class TraceRecord:
    step: int
    train_loss: float
    val_mse: float
    wall_ms: float
    k_alive: int


@dataclass
class TrainTrace:
    """Per-step training records; val_mse is NaN between validation evaluations"""
    records: List[TraceRecord] = field(default_factory=list)

    def append(self, record: TraceRecord) -> None:
        if self.records and record.step <= self.records[-1].step:
            raise ValueError(f"trace steps must increase: {record.step} after {self.records[-1].step}")
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def train_loss(self) -> np.ndarray:
        return np.array([r.train_loss for r in self.records])

    @property
    def final(self) -> TraceRecord:
        return self.records[-1]

    def validation(self) -> pd.DataFrame:
        """Rows at which the validation MSE was evaluated."""
        frame = self.to_frame()
        return frame[frame['val_mse'].notna()].reset_index(drop=True)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([asdict(r) for r in self.records], columns=TRACE_COLUMNS)

    def to_csv(self, path: Union[str, Path]) -> Path:
        """Write ``step,train_loss,val_mse,wall_ms,k_alive`` with round-trip float precision."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False, float_format='%.17g')
        return path


# ---------------------------------------------------------------------------
# Initialization
# ---------------------------------------------------------------------------

def chebyshev_centers(k: int) -> np.ndarray:
    """Chebyshev nodes cos(π(2i+1)/2k), i = 0..k−1, mapped to [0, 1] and sorted."""
    i = np.arange(k)
    nodes = np.cos(np.pi * (2 * i + 1) / (2 * k))
    return np.sort(0.5 * (nodes + 1.0))


def initialize_model(scheme: str, k: int, d: int = 1, p: int = 1,
                     rng: Optional[np.random.Generator] = None,
                     mother: MotherSplat = GAUSSIAN, init_width: Optional[float] = None) -> SplatModel:
    """
    Build an initial k-splat model with zero outputs and uniform masses 1/k.

    Args:
        scheme: 'uniform-grid', 'chebyshev' or 'random-uniform'
        k: number of splats
        d: input dimension (grid schemes need d = 1)
        p: output dimension
        rng: generator for 'random-uniform'
        init_width: overrides the 0.1 width of 'random-uniform'

    Example:
        >>> model = initialize_model('uniform-grid', k=4)
        >>> model.b.ravel(), model.A.ravel()
        (array([0.  , 0.25, 0.5 , 0.75]), array([0.125, 0.125, 0.125, 0.125]))
    """
    scheme = scheme.strip().lower()
    if k < 1:
        raise ValueError(f"k must be at least 1, got {k}")
    if scheme not in INIT_SCHEMES:
        raise ValueError(f"Unknown init scheme '{scheme}'. Use one of {', '.join(INIT_SCHEMES)}")
    if scheme != 'random-uniform' and d != 1:
        raise ValueError(f"init scheme '{scheme}' is one-dimensional, got d = {d}")

    if scheme == 'uniform-grid':
        b = np.arange(k, dtype=np.float64) / k
        widths = np.full(k, 1.0 / (2 * k))
    elif scheme == 'chebyshev':
        b = chebyshev_centers(k)
        padded = np.concatenate([[0.0], b, [1.0]])
        widths = np.abs(padded[2:] - padded[:-2]) / 2.0
    else:
        rng = rng if rng is not None else np.random.default_rng(0)
        width = 0.1 if init_width is None else init_width
        return SplatModel(mother, v=np.zeros((k, p)), A=np.tile(width * np.eye(d), (k, 1, 1)),
                          b=rng.uniform(0.0, 1.0, size=(k, d)), m=np.full(k, 1.0 / k))

    return SplatModel(mother, v=np.zeros((k, p)), A=widths.reshape(k, 1, 1),
                      b=b.reshape(k, 1), m=np.full(k, 1.0 / k))


# ---------------------------------------------------------------------------
# Update rules
# ---------------------------------------------------------------------------

PARAM_BLOCKS = ('v', 'A', 'b')


@dataclass
class AdamState:
    """First/second moment estimates per parameter block"""
    first: Dict[str, np.ndarray]
    second: Dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, model: SplatModel) -> 'AdamState':
        return cls(first={name: np.zeros_like(getattr(model, name)) for name in PARAM_BLOCKS},
                   second={name: np.zeros_like(getattr(model, name)) for name in PARAM_BLOCKS})

    def directions(self, grads: GradientSet, cfg: OptimizerConfig) -> Dict[str, np.ndarray]:
        """Advance the moments and return the bias-corrected update per block."""
        self.t += 1
        correction1 = 1.0 - cfg.beta1 ** self.t
        correction2 = 1.0 - cfg.beta2 ** self.t
        out = {}
        for name in PARAM_BLOCKS:
            g = grads.block(name)
            self.first[name] = cfg.beta1 * self.first[name] + (1.0 - cfg.beta1) * g
            self.second[name] = cfg.beta2 * self.second[name] + (1.0 - cfg.beta2) * g * g
            m_hat = self.first[name] / correction1
            v_hat = self.second[name] / correction2
            out[name] = cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)
        return out

    def reindex(self, parents: np.ndarray, fresh: np.ndarray) -> 'AdamState':
        """Follow a birth-death reindexing; newborn splats start with zero moments."""
        first, second = {}, {}
        for name in PARAM_BLOCKS:
            first[name] = self.first[name][parents].copy()
            second[name] = self.second[name][parents].copy()
            first[name][fresh] = 0.0
            second[name][fresh] = 0.0
        return AdamState(first=first, second=second, t=self.t)


def project(A: np.ndarray, sigma_min: float) -> np.ndarray:
    """
    Clamp the singular values of every A_i from below at ``sigma_min``.

    Matrices already satisfying the bound are returned untouched.
    """
    U, S, Vt = np.linalg.svd(A)
    low = S.min(axis=1) < sigma_min
    if not np.any(low):
        return A
    out = A.copy()
    clamped = np.maximum(S[low], sigma_min)
    out[low] = np.matmul(U[low] * clamped[:, None, :], Vt[low])
    return out


def fisher_rao_update(m: np.ndarray, gfr: np.ndarray, rate: float) -> np.ndarray:
    """m_i ← m_i exp(−rate·gfr_i), renormalized to Σ m_i = 1."""
    m = m * np.exp(-rate * gfr)
    total = np.sum(m)
    if not total > 0 or not np.isfinite(total):
        raise NonFinite(f"mass update produced total mass {total}")
    return m / total


def step(model: SplatModel, grads: GradientSet, cfg: OptimizerConfig,
         state: Optional[AdamState] = None, step_index: Optional[int] = None) -> SplatModel:
    """
    One explicit WFR step.

    Plain gradient descent moves splat i by ``learning_rate·m_i·g_i``, the
    derivative of F in the raw parameters. Adam normalizes each entry, so it
    takes the per-mass gradients as they are.

    Args:
        model: current model (not modified)
        grads: gradients at ``model``
        cfg: optimizer settings
        state: Adam moments, updated in place (created on the fly if missing)
        step_index: reported in NonFinite errors

    Returns:
        the updated model

    Raises:
        NonFinite: if the update produced NaN/Inf parameters
    """
    if cfg.algorithm == 'adam':
        state = state if state is not None else AdamState.zeros_like(model)
        delta = state.directions(grads, cfg)
    else:
        # Euclidean step lr·m_i·g per splat
        delta = {}
        for name in PARAM_BLOCKS:
            g = grads.block(name)
            delta[name] = cfg.learning_rate * model.m.reshape((-1,) + (1,) * (g.ndim - 1)) * g

    new = SplatModel(model.mother,
                     v=model.v - delta['v'],
                     A=model.A - delta['A'],
                     b=model.b - delta['b'],
                     m=model.m.copy(),
                     det_floor=model.det_floor)
    if not (np.all(np.isfinite(new.v)) and np.all(np.isfinite(new.A)) and np.all(np.isfinite(new.b))):
        raise NonFinite("parameter update is not finite", step=step_index)
    new.A = project(new.A, cfg.sigma_min)
    if cfg.fr_enabled:
        new.m = fisher_rao_update(new.m, grads.gfr, cfg.fr_rate)
    return new


def birth_death(model: SplatModel, cfg: OptimizerConfig,
                rng: Optional[np.random.Generator] = None) -> Tuple[SplatModel, np.ndarray, np.ndarray]:
    """
    Prune light splats and split heavy ones.

    Returns:
        (model, parents, fresh): ``parents[j]`` is the index of the old splat
        that new splat j descends from; ``fresh`` marks the appended clones.

    Raises:
        EmptyModel: if every splat falls below ``prune_threshold``
    """
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    total = float(np.sum(model.m))
    survivors = np.flatnonzero(model.m >= cfg.prune_threshold)
    if survivors.size == 0:
        raise EmptyModel(f"all {model.k} splats fell below prune_threshold={cfg.prune_threshold}")

    m = model.m[survivors]
    m = m * (total / np.sum(m))
    heavy = np.flatnonzero(m > cfg.clone_threshold)
    parents = np.concatenate([survivors, survivors[heavy]])
    fresh = np.zeros(parents.size, dtype=bool)
    fresh[survivors.size:] = True

    out = model.select(parents)
    out.m = np.concatenate([m, m[heavy]])
    if heavy.size:
        out.m[heavy] *= 0.5
        out.m[survivors.size:] *= 0.5
        sigma = np.linalg.svd(model.A[survivors[heavy]], compute_uv=False).min(axis=1)
        direction = rng.standard_normal((heavy.size, model.d))
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        offset = cfg.clone_scale * sigma[:, None] * direction
        out.b[heavy] += offset
        out.b[survivors.size:] -= offset

    if survivors.size < model.k or heavy.size:
        logger.debug("birth-death: pruned %d, cloned %d, k %d -> %d",
                     model.k - survivors.size, heavy.size, model.k, out.k)
    return out, parents, fresh


def prune_and_clone(model: SplatModel, cfg: OptimizerConfig,
                    rng: Optional[np.random.Generator] = None) -> SplatModel:
    """
    Birth-death discretization of the Fisher-Rao flow.

    Splats with m_i < prune_threshold are removed and their mass is
    redistributed proportionally; splats with m_i > clone_threshold are
    split into two half-mass copies at b ± clone_scale·σ_min(A)·u for a
    random unit vector u.

    Raises:
        EmptyModel: if every splat is pruned
    """
    return birth_death(model, cfg, rng)[0]


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------

def validation_mse(model: SplatModel, validation: Dataset) -> float:
    return ls_loss(model, validation)


def train(model: SplatModel, objective: Objective, cfg: OptimizerConfig,
          validation: Optional[Dataset] = None,
          checkpoint_dir: Optional[Union[str, Path]] = None,
          callback: Optional[Callable[[int, SplatModel], None]] = None) -> Tuple[SplatModel, TrainTrace]:
    """
    Run ``cfg.steps`` WFR updates on ``objective``.

    The trace holds one record per step with the training loss of the model
    that step started from, plus a final record for the returned model.
    Validation MSE is evaluated every ``log_every`` steps and at the end.

    Args:
        model: initial model (not modified)
        objective: loss and gradient provider
        cfg: optimizer settings
        validation: optional held-out set for the val_mse column
        checkpoint_dir: where checkpoints go when ``checkpoint_every`` > 0
        callback: called as callback(step, model) after every update

    Returns:
        (trained model, TrainTrace)

    Raises:
        NonFinite: with the offending step index
        EmptyModel: if birth-death removes every splat
    """
    rng = np.random.default_rng(cfg.seed)
    trace = TrainTrace()
    objective.reset()
    state = AdamState.zeros_like(model) if cfg.algorithm == 'adam' else None
    start = time.perf_counter()

    def wall_ms() -> float:
        return (time.perf_counter() - start) * 1000.0 if cfg.record_wall_time else 0.0

    def val(current: SplatModel) -> float:
        return validation_mse(current, validation) if validation is not None else float('nan')

    logger.info("Training on %s: %d steps of %s (lr=%g), k=%d, d=%d, p=%d",
                objective.name, cfg.steps, cfg.algorithm, cfg.learning_rate,
                model.k, model.d, model.p)

    for t in tqdm(range(cfg.steps), disable=not cfg.progress, desc=objective.name, unit='step'):
        objective.prepare(rng)
        try:
            loss, grads = objective.loss_and_gradients(model)
        except NonFinite as exc:
            raise NonFinite(str(exc), step=t) from exc
        if not np.isfinite(loss):
            raise NonFinite(f"training loss is {loss}", step=t)

        val_mse = float('nan')
        if t % cfg.log_every == 0:
            val_mse = val(model)
            logger.info("step %d: train_loss=%.6e val_mse=%.6e k=%d", t, loss, val_mse, model.k)
        if t % cfg.trace_every == 0 or t % cfg.log_every == 0:
            trace.append(TraceRecord(t, float(loss), val_mse, wall_ms(), model.k))

        model = step(model, grads, cfg, state, step_index=t)
        if cfg.fr_enabled and cfg.birth_death_every and (t + 1) % cfg.birth_death_every == 0:
            model, parents, fresh = birth_death(model, cfg, rng)
            if state is not None:
                state = state.reindex(parents, fresh)

        if checkpoint_dir is not None and cfg.checkpoint_every and (t + 1) % cfg.checkpoint_every == 0:
            save_model(model, Path(checkpoint_dir) / f"checkpoint_{t + 1:07d}.json")
        if callback is not None:
            callback(t + 1, model)

    final_loss = objective.loss(model)
    if not np.isfinite(final_loss):
        raise NonFinite(f"final training loss is {final_loss}", step=cfg.steps)
    final_val = val(model)
    trace.append(TraceRecord(cfg.steps, float(final_loss), final_val, wall_ms(), model.k))
    logger.info("Finished after %d steps in %.1f s: train_loss=%.6e val_mse=%.6e k=%d",
                cfg.steps, time.perf_counter() - start, final_loss, final_val, model.k)
    return model, trace
