"""The prediction-kernel lattice.

Every cell of a mesh runs the same small recurrent network (the
prediction kernel, PK): a linear pre-layer, an LSTM layer, and a linear
post-layer whose outputs split into the next-step prediction and a
lateral value handed to the neighbors. One shared parameter set serves
all cells, so a lattice step is evaluated as a batch over cells.

Lateral exchange comes in two flavors. The base and v1 variants sum the
neighbors' lateral outputs and push them through a shared linear
transition kernel (TK). The v2 and v3 variants drop the TK and wire all
eight neighbors directly into direction-indexed input slots; v3 also
emits eight direction-dedicated outputs, so each neighbor receives the
slot pointing back at it. Lateral values produced at step t are consumed
at step t+1, which keeps cells independent within a step.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from enum import Enum
from pathlib import Path

import numpy as np

from . import tape as T
from .errors import ConfigError, ShapeError
from .mesh import Direction, MeshTopology

# gate blocks inside the (n, 4H) LSTM preactivation
GATE_ORDER = ("input", "forget", "candidate", "output")


class Variant(str, Enum):
    BASE = "distana"
    V1 = "distana-v1"
    V2 = "distana-v2"
    V3 = "distana-v3"

    @property
    def uses_tk(self) -> bool:
        return self in (Variant.BASE, Variant.V1)


@dataclass(frozen=True)
class PkConfig:
    dyn_in: int = 1
    static_in: int = 0
    lateral_in: int = 1
    pre_units: int = 1
    lstm_cells: int = 4
    dyn_out: int = 1
    lateral_out: int = 1

    def __post_init__(self):
        if min(self.dyn_in, self.dyn_out) < 1:
            raise ConfigError("dyn_in and dyn_out must be >= 1")
        if min(self.static_in, self.lateral_in, self.pre_units,
               self.lstm_cells, self.lateral_out) < 0:
            raise ConfigError("layer sizes must be non-negative")

    @property
    def in_total(self) -> int:
        return self.dyn_in + self.static_in + self.lateral_in


def variant_config(variant: Variant, lstm_cells: int = 4) -> PkConfig:
    """PK dimensions for each lattice variant (all keep 1-channel dynamics)."""
    variant = Variant(variant)
    if variant is Variant.BASE:
        return PkConfig(lateral_in=1, pre_units=1, lstm_cells=lstm_cells, lateral_out=1)
    if variant is Variant.V1:
        return PkConfig(lateral_in=1, pre_units=4, lstm_cells=lstm_cells, lateral_out=1)
    if variant is Variant.V2:
        return PkConfig(lateral_in=8, pre_units=4, lstm_cells=lstm_cells, lateral_out=1)
    return PkConfig(lateral_in=8, pre_units=4, lstm_cells=lstm_cells, lateral_out=8)


@dataclass
class PkParams:
    """Shared prediction-kernel weights; one instance serves every cell."""
    w_pre: np.ndarray    # (in_total, pre_units), no bias
    w_lstm: np.ndarray   # (pre_units + lstm_cells, 4 * lstm_cells)
    b_lstm: np.ndarray   # (4 * lstm_cells,)
    w_post: np.ndarray   # (lstm_cells, dyn_out + lateral_out), no bias


@dataclass
class TkParams:
    """Shared transition-kernel weights; one instance serves every edge."""
    w_tk: np.ndarray     # (lateral_out, lateral_in), linear, no activation


@dataclass
class Model:
    variant: Variant
    config: PkConfig
    pk: PkParams
    tk: TkParams | None


def named_params(model: Model) -> dict:
    """Parameter arrays in the declared checkpoint order."""
    out = {
        "w_pre": model.pk.w_pre,
        "w_lstm": model.pk.w_lstm,
        "b_lstm": model.pk.b_lstm,
        "w_post": model.pk.w_post,
    }
    if model.tk is not None:
        out["w_tk"] = model.tk.w_tk
    return out


def param_count(model: Model) -> int:
    return sum(arr.size for arr in named_params(model).values())


def init_params(variant: Variant, lstm_cells: int = 4, seed: int = 0,
                config: PkConfig | None = None) -> Model:
    """Fresh model: weights ~ U(-s, s) with s = 1/sqrt(fan_in) per layer;
    LSTM biases zero except the forget gate block, which starts at 1."""
    variant = Variant(variant)
    cfg = config if config is not None else variant_config(variant, lstm_cells)
    rng = np.random.default_rng(np.random.SeedSequence((seed, 2)))
    h = cfg.lstm_cells

    def draw(rows, cols, fan_in):
        s = 1.0 / np.sqrt(max(1, fan_in))
        return rng.uniform(-s, s, size=(rows, cols))

    w_pre = draw(cfg.in_total, cfg.pre_units, cfg.in_total)
    w_lstm = draw(cfg.pre_units + h, 4 * h, cfg.pre_units + h)
    b_lstm = np.zeros(4 * h)
    b_lstm[h:2 * h] = 1.0
    w_post = draw(h, cfg.dyn_out + cfg.lateral_out, h)
    pk = PkParams(w_pre=w_pre, w_lstm=w_lstm, b_lstm=b_lstm, w_post=w_post)
    tk = None
    if variant.uses_tk:
        tk = TkParams(w_tk=draw(cfg.lateral_out, cfg.lateral_in, cfg.lateral_out))
    return Model(variant=variant, config=cfg, pk=pk, tk=tk)


def clone_model(model: Model) -> Model:
    pk = PkParams(**{k: v.copy() for k, v in asdict(model.pk).items()})
    tk = TkParams(w_tk=model.tk.w_tk.copy()) if model.tk is not None else None
    return Model(variant=model.variant, config=model.config, pk=pk, tk=tk)


def params_as_tensors(model: Model) -> dict:
    return {name: T.Tensor(arr, requires_grad=True)
            for name, arr in named_params(model).items()}


@dataclass
class LatticeState:
    """Per-cell recurrent state: LSTM h/c plus the outgoing lateral buffer."""
    h: T.Tensor
    c: T.Tensor
    buf: T.Tensor

    @classmethod
    def zeros(cls, config: PkConfig, cells: int) -> "LatticeState":
        return cls(h=T.Tensor(np.zeros((cells, config.lstm_cells))),
                   c=T.Tensor(np.zeros((cells, config.lstm_cells))),
                   buf=T.Tensor(np.zeros((cells, config.lateral_out))))


def pk_forward(params: dict, config: PkConfig, dyn_in: T.Tensor,
               static_in: T.Tensor | None, lateral_in: T.Tensor,
               h: T.Tensor, c: T.Tensor):
    """One shared-weight PK step for a batch of cells.

    Returns (dyn_out, lateral_out, h_new, c_new). Inputs are (cells, k)
    column blocks; the pre- and post-layers are linear without bias or
    activation, the LSTM carries the only biases.
    """
    parts = [dyn_in]
    if config.static_in > 0:
        if static_in is None:
            raise ShapeError("pk_forward: config declares static inputs but none given")
        parts.append(static_in)
    parts.append(lateral_in)
    x = T.concat_cols(parts)
    if x.shape[1] != config.in_total:
        raise ShapeError(f"pk_forward: got {x.shape[1]} input columns, expected {config.in_total}")
    p = T.matmul(x, params["w_pre"])
    z = T.add_rowvec(T.matmul(T.concat_cols([p, h]), params["w_lstm"]), params["b_lstm"])
    h_new, c_new = T.lstm_cell(z, c)
    out = T.matmul(h_new, params["w_post"])
    dyn = T.slice_cols(out, 0, config.dyn_out)
    lat = T.slice_cols(out, config.dyn_out, config.dyn_out + config.lateral_out)
    return dyn, lat, h_new, c_new


def lateral_route_tk(topology: MeshTopology, w_tk: T.Tensor, buffers: T.Tensor) -> T.Tensor:
    """Summed-neighbor routing through the shared transition kernel.

    Each cell receives W_tk applied to the sum of its present neighbors'
    previous-step lateral buffers (absent neighbors contribute zero).
    """
    if w_tk.data.ndim != 2 or w_tk.shape[0] != buffers.shape[1]:
        raise ConfigError("lateral_route_tk: transition kernel does not match buffer width")
    summed = T.gather_sum(buffers, topology.neighbor_index)
    return T.matmul(summed, w_tk)


_V2_SLOTS = np.zeros(8, dtype=np.int64)
_V3_SLOTS = np.array([Direction(d).opposite() for d in range(8)], dtype=np.int64)


def lateral_route_direct(topology: MeshTopology, buffers: T.Tensor,
                         variant: Variant) -> T.Tensor:
    """Direction-indexed routing for v2/v3: input slot d reads the neighbor
    in direction d. v2 neighbors emit one value; v3 neighbors emit eight
    and slot d reads the one dedicated to this cell (their slot opposite(d))."""
    variant = Variant(variant)
    if variant is Variant.V2:
        if buffers.shape[1] != 1:
            raise ConfigError("v2 routing expects single-value lateral buffers")
        slots = _V2_SLOTS
    elif variant is Variant.V3:
        if buffers.shape[1] != 8:
            raise ConfigError("v3 routing expects 8-slot lateral buffers")
        slots = _V3_SLOTS
    else:
        raise ConfigError(f"direct routing is only defined for v2/v3, not {variant.value}")
    return T.gather_slot(buffers, topology.neighbor_index, slots)


def route_lateral(model: Model, topology: MeshTopology, params: dict,
                  buffers: T.Tensor) -> T.Tensor:
    if model.variant.uses_tk:
        return lateral_route_tk(topology, params["w_tk"], buffers)
    return lateral_route_direct(topology, buffers, model.variant)


def lattice_step(model: Model, topology: MeshTopology, frame_in,
                 state: LatticeState, params: dict | None = None,
                 static_in: T.Tensor | None = None):
    """Advance the whole lattice one step.

    frame_in is an (H, W) frame (or anything reshaping to (cells, dyn_in));
    the prediction comes back in the same shape. Pass `params` (from
    params_as_tensors) to reuse tensors across steps during training;
    otherwise the model's arrays are wrapped fresh without gradients.
    """
    frame = frame_in if isinstance(frame_in, T.Tensor) else T.Tensor(frame_in)
    cells = topology.cells
    if frame.size != cells * model.config.dyn_in:
        raise ShapeError(
            f"lattice_step: frame with {frame.size} values does not cover "
            f"{cells} cells x {model.config.dyn_in} channels")
    if params is None:
        params = {name: T.Tensor(arr) for name, arr in named_params(model).items()}
    lateral_in = route_lateral(model, topology, params, state.buf)
    dyn_col = T.reshape(frame, (cells, model.config.dyn_in))
    dyn, lat, h_new, c_new = pk_forward(params, model.config, dyn_col,
                                        static_in, lateral_in, state.h, state.c)
    pred = T.reshape(dyn, frame.shape)
    return pred, LatticeState(h=h_new, c=c_new, buf=lat)


# ---------------------------------------------------------------------------
# checkpoints: <base>.json header + <base>.f64 raw little-endian arrays


def save_checkpoint(base_path, model: Model) -> Path:
    base = Path(base_path)
    params = named_params(model)
    header = {
        "format": 1,
        "config": {"variant": model.variant.value, **asdict(model.config)},
        "arrays": [{"name": k, "shape": list(v.shape)} for k, v in params.items()],
    }
    base.parent.mkdir(parents=True, exist_ok=True)
    with open(base.with_suffix(".json"), "w") as fh:
        json.dump(header, fh, sort_keys=True)
        fh.write("\n")
    with open(base.with_suffix(".f64"), "wb") as fh:
        for arr in params.values():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return base


def load_checkpoint(base_path, expect_variant: Variant | None = None,
                    expect_config: PkConfig | None = None) -> Model:
    base = Path(base_path)
    with open(base.with_suffix(".json")) as fh:
        header = json.load(fh)
    if header.get("format") != 1:
        raise ConfigError(f"{base}: unsupported checkpoint format {header.get('format')!r}")
    cfg_doc = dict(header["config"])
    variant = Variant(cfg_doc.pop("variant"))
    config = PkConfig(**cfg_doc)
    if expect_variant is not None and Variant(expect_variant) != variant:
        raise ConfigError(f"{base}: checkpoint holds {variant.value}, expected "
                          f"{Variant(expect_variant).value}")
    if expect_config is not None and expect_config != config:
        raise ConfigError(f"{base}: checkpoint config {config} does not match expected "
                          f"{expect_config}")
    raw = np.fromfile(base.with_suffix(".f64"), dtype="<f8")
    arrays = {}
    offset = 0
    for spec in header["arrays"]:
        shape = tuple(spec["shape"])
        size = int(np.prod(shape))
        if offset + size > raw.size:
            raise ConfigError(f"{base}: raw payload shorter than declared arrays")
        arrays[spec["name"]] = raw[offset:offset + size].reshape(shape).copy()
        offset += size
    if offset != raw.size:
        raise ConfigError(f"{base}: raw payload longer than declared arrays")
    expected_names = ["w_pre", "w_lstm", "b_lstm", "w_post"] + (
        ["w_tk"] if variant.uses_tk else [])
    if list(arrays) != expected_names:
        raise ConfigError(f"{base}: checkpoint arrays {list(arrays)} do not match "
                          f"{expected_names}")
    pk = PkParams(w_pre=arrays["w_pre"], w_lstm=arrays["w_lstm"],
                  b_lstm=arrays["b_lstm"], w_post=arrays["w_post"])
    tk = TkParams(w_tk=arrays["w_tk"]) if variant.uses_tk else None
    model = Model(variant=variant, config=config, pk=pk, tk=tk)
    _check_param_shapes(model)
    return model


def _check_param_shapes(model: Model) -> None:
    cfg = model.config
    h = cfg.lstm_cells
    expected = {
        "w_pre": (cfg.in_total, cfg.pre_units),
        "w_lstm": (cfg.pre_units + h, 4 * h),
        "b_lstm": (4 * h,),
        "w_post": (h, cfg.dyn_out + cfg.lateral_out),
    }
    if model.tk is not None:
        expected["w_tk"] = (cfg.lateral_out, cfg.lateral_in)
    for name, arr in named_params(model).items():
        if arr.shape != expected[name]:
            raise ConfigError(f"parameter {name} has shape {arr.shape}, "
                              f"config implies {expected[name]}")
