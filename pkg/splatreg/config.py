"""
Splat Regression - Experiment Configuration
===========================================

Experiments are described by flat ``key = value`` text files with ``#``
comments and no sections:

    experiment = fit
    seed = 0
    target = multiscale_sine
    k = 30
    learning_rate = 1e-4

Lists are comma separated (``haar_levels = 4, 6, 8``); matrices use ``;``
between rows (``geodesic_a0 = 1, 0; 0, 1``). Unknown keys are rejected and
every error names the offending key.
"""

import configparser
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np

from splatreg.errors import ConfigError
from splatreg.optimize import INIT_SCHEMES, OptimizerConfig
from splatreg.targets import DATA_SOURCES, PDE_KINDS, Target, get_target

logger = logging.getLogger(__name__)

EXPERIMENTS = ('fit', 'pde', 'baseline', 'gradcheck', 'approx-bound', 'geodesic')
TARGET_EXPERIMENTS = ('fit', 'baseline', 'approx-bound')
GRADCHECK_LOSSES = ('least_squares', 'poisson', 'allen_cahn')
_SECTION = 'experiment'
_TRUE = {'1', 'true', 'yes', 'on'}
_FALSE = {'0', 'false', 'no', 'off'}


@dataclass
class ModelSpec:
    k: int = 30
    mother: str = 'gaussian'
    init: str = 'uniform-grid'
    init_width: Optional[float] = None


@dataclass
class DataSpec:
    target: str = 'multiscale_sine'
    target_eps: float = 0.1
    d: int = 1
    n: int = 200
    noise_sigma: float = 0.0
    data_seed: Optional[int] = None
    val_grid: Optional[int] = None

    @property
    def validation_points(self) -> int:
        """Points per axis: 2000 in 1-D, 101 otherwise unless configured."""
        if self.val_grid is not None:
            return self.val_grid
        return 2000 if self.d == 1 else 101


@dataclass
class PdeSpec:
    pde_kind: str = 'allen_cahn'
    eps: float = 0.1
    n_int: int = 10000
    n_bdy: int = 1000
    forcing: str = 'zero'
    boundary: str = 'tanh-interface'
    forcing_table: Optional[str] = None
    boundary_table: Optional[str] = None
    boundary_weight: float = 1.0
    resample_collocation: bool = False
    manufactured_width: float = 0.1
    reference: str = 'tanh-interface'


@dataclass
class BaselineSpec:
    haar_levels: List[int] = field(default_factory=lambda: [8])
    cheb_nodes: List[int] = field(default_factory=lambda: [30])


@dataclass
class GradcheckSpec:
    gradcheck_loss: str = 'least_squares'
    gradcheck_instances: int = 50
    gradcheck_k: int = 5
    gradcheck_d: int = 3
    gradcheck_p: int = 3
    gradcheck_n: int = 10
    fd_step: float = 1e-5
    gradcheck_threshold: float = 1e-4


@dataclass
class ApproxSpec:
    approx_eps: List[float] = field(default_factory=lambda: [0.2, 0.05])
    approx_k: List[int] = field(default_factory=lambda: [100, 10000])
    approx_seeds: List[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    approx_grid: int = 2001


@dataclass
class GeodesicSpec:
    geodesic_a0: List[List[float]] = field(default_factory=lambda: [[1.0, 0.0], [0.0, 1.0]])
    geodesic_b0: List[float] = field(default_factory=lambda: [0.0, 0.0])
    geodesic_a1: List[List[float]] = field(default_factory=lambda: [[2.0, 0.5], [0.0, 0.5]])
    geodesic_b1: List[float] = field(default_factory=lambda: [1.0, 1.0])
    geodesic_points: int = 11


@dataclass
class ExperimentConfig:
    """Fully resolved experiment description"""
    experiment: str
    seed: int
    model: ModelSpec = field(default_factory=ModelSpec)
    data: DataSpec = field(default_factory=DataSpec)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    pde: PdeSpec = field(default_factory=PdeSpec)
    baseline: BaselineSpec = field(default_factory=BaselineSpec)
    gradcheck: GradcheckSpec = field(default_factory=GradcheckSpec)
    approx: ApproxSpec = field(default_factory=ApproxSpec)
    geodesic: GeodesicSpec = field(default_factory=GeodesicSpec)
    out: Optional[str] = None
    source: Optional[str] = None

    def to_dict(self) -> dict:
        return asdict(self)


_GROUPS = {
    'model': ModelSpec,
    'data': DataSpec,
    'optimizer': OptimizerConfig,
    'pde': PdeSpec,
    'baseline': BaselineSpec,
    'gradcheck': GradcheckSpec,
    'approx': ApproxSpec,
    'geodesic': GeodesicSpec,
}
# 'seed' feeds the optimizer as well as the experiment
_TOP_LEVEL = {'experiment', 'seed', 'out'}


def _known_keys() -> Dict[str, str]:
    keys = {}
    for group, cls in _GROUPS.items():
        for f in fields(cls):
            keys[f.name] = group
    return keys


def _parse_list(key: str, raw: str, kind=float) -> list:
    try:
        return [kind(item.strip()) for item in raw.split(',') if item.strip()]
    except ValueError as exc:
        raise ConfigError(key, f"expected a comma-separated list, got {raw!r}") from exc


def _parse_matrix(key: str, raw: str) -> List[List[float]]:
    rows = [_parse_list(key, row) for row in raw.split(';') if row.strip()]
    if not rows or len({len(r) for r in rows}) != 1:
        raise ConfigError(key, f"expected rows of equal length separated by ';', got {raw!r}")
    return rows


def _convert(key: str, raw: str, annotation) -> object:
    text = raw.strip()
    origin = str(annotation)
    try:
        if annotation is bool:
            lowered = text.lower()
            if lowered in _TRUE:
                return True
            if lowered in _FALSE:
                return False
            raise ValueError(text)
        if annotation is int:
            return int(text)
        if annotation is float:
            return float(text)
        if annotation is str:
            return text
        if 'Optional' in origin or 'Union' in origin:
            if text.lower() in ('', 'none'):
                return None
            if 'int' in origin:
                return int(text)
            if 'float' in origin:
                return float(text)
            return text
        if 'List[typing.List[float]]' in origin:
            return _parse_matrix(key, text)
        if 'List[int]' in origin:
            return _parse_list(key, text, int)
        if 'List[float]' in origin:
            return _parse_list(key, text, float)
    except ValueError as exc:
        raise ConfigError(key, f"invalid value {raw!r}") from exc
    raise ConfigError(key, f"unsupported setting type {annotation}")


def parse_config(text: str, source: Optional[str] = None) -> ExperimentConfig:
    """
    Parse flat ``key = value`` text into an ExperimentConfig.

    Raises:
        ConfigError: for unknown keys, missing ``seed``/``experiment`` and invalid values
        UnknownTarget: if the configured target is not registered
    """
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=('#',),
                                       comment_prefixes=('#',), delimiters=('=',))
    parser.optionxform = str
    try:
        parser.read_string(f"[{_SECTION}]\n{text}", source=source or '<config>')
    except configparser.Error as exc:
        raise ConfigError('<syntax>', str(exc).replace('\n', ' ')) from exc
    values = dict(parser[_SECTION])

    known = _known_keys()
    for key in values:
        if key not in known and key not in _TOP_LEVEL:
            raise ConfigError(key, "unknown setting")
    if 'seed' not in values:
        raise ConfigError('seed', "missing (every experiment needs an explicit seed)")
    if 'experiment' not in values:
        raise ConfigError('experiment', f"missing; use one of {', '.join(EXPERIMENTS)}")

    experiment = values['experiment'].strip().lower()
    if experiment not in EXPERIMENTS:
        raise ConfigError('experiment', f"'{experiment}' is not one of {', '.join(EXPERIMENTS)}")
    seed = _convert('seed', values['seed'], int)

    groups = {}
    for group, cls in _GROUPS.items():
        kwargs = {}
        for f in fields(cls):
            if f.name in values:
                kwargs[f.name] = _convert(f.name, values[f.name], f.type)
        if group == 'optimizer':
            kwargs['seed'] = seed
        try:
            groups[group] = cls(**kwargs)
        except ValueError as exc:
            # dataclass validation names the field in its message
            bad = next((name for name in kwargs if name in str(exc)), group)
            raise ConfigError(bad, str(exc)) from exc

    config = ExperimentConfig(experiment=experiment, seed=seed, out=values.get('out'),
                              source=source, **groups)
    _validate(config)
    logger.debug("Parsed %s config from %s", experiment, source or '<string>')
    return config


def resolve_target(data: DataSpec) -> Target:
    """Registry target for a data spec (tanh_interface takes its width from target_eps)."""
    params = {'eps': data.target_eps} if data.target.strip().lower() == 'tanh_interface' else {}
    return get_target(data.target, **params)


def _validate(config: ExperimentConfig) -> None:
    model, data, pde = config.model, config.data, config.pde
    if model.k < 1:
        raise ConfigError('k', f"must be at least 1, got {model.k}")
    if model.init not in INIT_SCHEMES:
        raise ConfigError('init', f"'{model.init}' is not one of {', '.join(INIT_SCHEMES)}")
    if data.n < 1:
        raise ConfigError('n', f"must be at least 1, got {data.n}")
    if data.noise_sigma < 0:
        raise ConfigError('noise_sigma', f"must be nonnegative, got {data.noise_sigma}")
    if data.d < 1:
        raise ConfigError('d', f"must be at least 1, got {data.d}")
    # only these experiments read the data target; pde runs take their dimension from d alone
    if config.experiment in TARGET_EXPERIMENTS:
        target = resolve_target(data)
        if target.d is not None and target.d != data.d:
            raise ConfigError('d', f"target '{data.target}' is {target.d}-dimensional, got d = {data.d}")
    if pde.pde_kind not in PDE_KINDS:
        raise ConfigError('pde_kind', f"'{pde.pde_kind}' is not one of {', '.join(PDE_KINDS)}")
    if not pde.eps > 0:
        raise ConfigError('eps', f"must be positive, got {pde.eps}")
    for key in ('forcing', 'boundary'):
        if getattr(pde, key) not in DATA_SOURCES:
            raise ConfigError(key, f"'{getattr(pde, key)}' is not one of {', '.join(DATA_SOURCES)}")
    if pde.reference not in ('none', 'tanh-interface', 'manufactured-splat'):
        raise ConfigError('reference', f"'{pde.reference}' must be none, tanh-interface or manufactured-splat")
    if pde.n_int < 1 or pde.n_bdy < 0:
        raise ConfigError('n_int', f"need n_int >= 1 and n_bdy >= 0, got {pde.n_int}, {pde.n_bdy}")
    if config.gradcheck.gradcheck_loss not in GRADCHECK_LOSSES:
        raise ConfigError('gradcheck_loss',
                          f"'{config.gradcheck.gradcheck_loss}' is not one of {', '.join(GRADCHECK_LOSSES)}")
    if len(config.approx.approx_eps) != len(config.approx.approx_k):
        raise ConfigError('approx_k', "approx_eps and approx_k must have the same length")
    geo = config.geodesic
    for key in ('geodesic_a0', 'geodesic_a1'):
        matrix = np.asarray(getattr(geo, key))
        if matrix.shape != (len(geo.geodesic_b0), len(geo.geodesic_b0)):
            raise ConfigError(key, f"shape {matrix.shape} does not match the center dimension")
    if len(geo.geodesic_b1) != len(geo.geodesic_b0):
        raise ConfigError('geodesic_b1', "centers must have the same dimension")


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    """
    Read and parse a config file.

    Raises:
        OSError: if the file cannot be read
        ConfigError, UnknownTarget: as ``parse_config``
    """
    path = Path(path)
    return parse_config(path.read_text(), source=str(path))
