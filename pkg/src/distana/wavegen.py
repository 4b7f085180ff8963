"""Synthetic 2D wave sequences: the two data sets used throughout.

Data set 1 ("ds1") is a closed-form expanding ripple: each cell evaluates
sin(r - c*t) * exp(-d*(c*t - r)) behind the wavefront and zero ahead of
it, so waves leave the grid without reflection. Data set 2 ("ds2")
integrates the 2D wave equation with an explicit central-difference
scheme, reflecting waves at the borders.

All fields are (T, H, W) float64 arrays. Sequence sampling derives one
RNG stream per (seed, split, index), so datasets are reproducible and
train/test draws never overlap.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from . import kernels
from .errors import ConfigError, ShapeError
from .util import worker_count

# stability bound of the explicit 2D scheme
CFL_LIMIT = 1.0 / math.sqrt(2.0)

DEFAULT_TRAIN_SEQUENCES = 100
DEFAULT_TEST_SEQUENCES = 20


@dataclass(frozen=True)
class Ds1Config:
    height: int = 16
    width: int = 16
    steps: int = 80
    # the default step keeps consecutive frames strongly correlated, so the
    # identity reference error sits orders of magnitude below the zero one
    dt: float = 0.01
    wave_speed: float = 10.0
    decay: float = 0.25
    center_x: float = 7.5
    center_y: float = 7.5
    seed: int = 0

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise ConfigError(f"field must be at least 1x1, got {self.height}x{self.width}")
        if self.steps < 1:
            raise ConfigError("steps must be >= 1")
        if self.dt <= 0:
            raise ConfigError("dt must be positive")
        if self.wave_speed <= 0:
            raise ConfigError("wave speed must be positive")
        if self.decay < 0:
            raise ConfigError("decay must be non-negative")


@dataclass(frozen=True)
class Ds2Config:
    height: int = 16
    width: int = 16
    steps: int = 80
    dt: float = 0.1
    dx: float = 1.0
    dy: float = 1.0
    wave_speed: float = 3.0
    amplitude: float = 0.34
    var_x: float = 0.5
    var_y: float = 0.5
    center_x: float = 7.5
    center_y: float = 7.5
    seed: int = 0

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise ConfigError(f"field must be at least 1x1, got {self.height}x{self.width}")
        if self.steps < 1:
            raise ConfigError("steps must be >= 1")
        if min(self.dt, self.dx, self.dy) <= 0:
            raise ConfigError("dt, dx and dy must be positive")
        if self.var_x <= 0 or self.var_y <= 0:
            raise ConfigError("variances must be positive")
        if self.cfl > CFL_LIMIT:
            raise ConfigError(
                f"unstable configuration: CFL number {self.cfl:.4f} exceeds the "
                f"limit 1/sqrt(2) = {CFL_LIMIT:.4f}")

    @property
    def cfl(self) -> float:
        return self.wave_speed * self.dt / min(self.dx, self.dy)


class DatasetKind(str, Enum):
    DS1 = "ds1"
    DS2 = "ds2"
    DS1_VARIABLE_C = "ds1-var"


def ds1_value(x: float, y: float, t: float, cfg: Ds1Config) -> float:
    """Scalar closed-form evaluation of the ds1 ripple at (x, y, t)."""
    dx = x - cfg.center_x
    dy = y - cfg.center_y
    r = math.sqrt(dx * dx + dy * dy)
    ct = cfg.wave_speed * t
    if r < ct:
        return math.sin(r - ct) * math.exp(-cfg.decay * (ct - r))
    return 0.0


def ds1_sequence(cfg: Ds1Config) -> np.ndarray:
    """(T, H, W) ripple field; frame k samples the closed form at t = k*dt."""
    k = kernels.backend()
    out = np.empty((cfg.steps, cfg.height, cfg.width))
    for step in range(cfg.steps):
        ct = cfg.wave_speed * (step * cfg.dt)
        out[step] = k.ds1_frame(cfg.height, cfg.width, cfg.center_x, cfg.center_y,
                                ct, cfg.decay)
    return out


def ds2_init(cfg: Ds2Config) -> np.ndarray:
    """Gaussian bell initial frame, height `amplitude` at the center."""
    cols = np.arange(cfg.width, dtype=np.float64)[None, :]
    rows = np.arange(cfg.height, dtype=np.float64)[:, None]
    ex = (cols - cfg.center_x) ** 2 / (2.0 * cfg.var_x)
    ey = (rows - cfg.center_y) ** 2 / (2.0 * cfg.var_y)
    return cfg.amplitude * np.exp(-(ex + ey))


def ds2_step(prev: np.ndarray, curr: np.ndarray, cfg: Ds2Config) -> np.ndarray:
    """One explicit update of the wave equation; off-field samples are zero."""
    if prev.shape != curr.shape:
        raise ShapeError(f"ds2_step: frame shapes {prev.shape} and {curr.shape} differ")
    coef_x = (cfg.wave_speed * cfg.dt) ** 2 / cfg.dx ** 2
    coef_y = (cfg.wave_speed * cfg.dt) ** 2 / cfg.dy ** 2
    return kernels.backend().wave2d_step(prev, curr, coef_x, coef_y)


def ds2_sequence(cfg: Ds2Config) -> np.ndarray:
    """(T, H, W) reflected-wave field from the Gaussian initial condition.

    The frame before t=0 is all zeros, so the first update sees a silent
    past; borders reflect because the stencil treats outside samples as 0.
    """
    out = np.empty((cfg.steps, cfg.height, cfg.width))
    out[0] = ds2_init(cfg)
    if cfg.steps == 1:
        return out
    out[1] = ds2_step(np.zeros_like(out[0]), out[0], cfg)
    for step in range(2, cfg.steps):
        out[step] = ds2_step(out[step - 2], out[step - 1], cfg)
    return out


@dataclass
class WaveDataset:
    kind: DatasetKind
    train: list
    test: list
    train_configs: list
    test_configs: list
    seed: int

    @property
    def height(self) -> int:
        return self.train[0].shape[1] if self.train else self.test[0].shape[1]

    @property
    def width(self) -> int:
        return self.train[0].shape[2] if self.train else self.test[0].shape[2]


_SPLIT_IDS = {"train": 0, "test": 1}


def _draw_config(kind: DatasetKind, base, seed: int, split: str, index: int):
    """Per-sequence config with its own RNG stream for center (and speed)."""
    rng = np.random.default_rng(np.random.SeedSequence((seed, _SPLIT_IDS[split], index)))
    # keep the initial front on-grid: centers land in [1, W-2] x [1, H-2]
    cx = rng.uniform(1.0, base.width - 2.0)
    cy = rng.uniform(1.0, base.height - 2.0)
    cfg = replace(base, center_x=cx, center_y=cy, seed=seed)
    if kind is DatasetKind.DS1_VARIABLE_C:
        cfg = replace(cfg, wave_speed=rng.uniform(0.5 * base.wave_speed, 1.5 * base.wave_speed))
    return cfg


def default_config(kind: DatasetKind):
    if kind is DatasetKind.DS2:
        return Ds2Config()
    return Ds1Config()


def generate_sequence(kind: DatasetKind, cfg) -> np.ndarray:
    if kind is DatasetKind.DS2:
        return ds2_sequence(cfg)
    return ds1_sequence(cfg)


def sample_dataset(kind: DatasetKind, n_train: int, n_test: int, base_cfg=None,
                   seed: int = 0) -> WaveDataset:
    """Draw train/test sequences with uniformly placed wave centers.

    For DS1_VARIABLE_C the wave speed is additionally drawn from
    [0.5c, 1.5c] around the base speed. Same (kind, counts, base, seed)
    always yields bit-identical data.
    """
    if n_train < 1 or n_test < 1:
        raise ConfigError("n_train and n_test must be >= 1")
    kind = DatasetKind(kind)
    base = base_cfg if base_cfg is not None else default_config(kind)
    if kind is DatasetKind.DS2 and not isinstance(base, Ds2Config):
        raise ConfigError("ds2 dataset requires a Ds2Config")
    if kind is not DatasetKind.DS2 and not isinstance(base, Ds1Config):
        raise ConfigError(f"{kind.value} dataset requires a Ds1Config")

    train_cfgs = [_draw_config(kind, base, seed, "train", i) for i in range(n_train)]
    test_cfgs = [_draw_config(kind, base, seed, "test", i) for i in range(n_test)]

    workers = min(worker_count(), max(n_train, n_test))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            train = list(pool.map(lambda c: generate_sequence(kind, c), train_cfgs))
            test = list(pool.map(lambda c: generate_sequence(kind, c), test_cfgs))
    else:
        train = [generate_sequence(kind, c) for c in train_cfgs]
        test = [generate_sequence(kind, c) for c in test_cfgs]

    return WaveDataset(kind=kind, train=train, test=test,
                       train_configs=train_cfgs, test_configs=test_cfgs, seed=seed)
