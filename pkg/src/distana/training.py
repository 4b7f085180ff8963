"""Teacher-forced BPTT training with Adam and deterministic seeding.

A training step unrolls the lattice over a whole sequence, feeding
ground-truth frames and scoring each prediction against the next frame,
then backpropagates through the full unrolled graph, clips the global
gradient norm and applies one Adam update to the shared parameters.

Everything that involves randomness (epoch shuffling, parameter init,
dataset sampling) draws from seed-derived streams, so a (seed, config)
pair pins the whole run bit for bit.
"""

from __future__ import annotations

import dataclasses
import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import tape as T
from .errors import ConfigError, NumericError
from .mesh import MeshTopology
from .model import (LatticeState, Model, lattice_step, named_params,
                    params_as_tensors, save_checkpoint)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 1
    teacher_len: int | None = None  # prediction steps per sequence; None = full
    grad_clip: float = 1.0
    seed: int = 0
    checkpoint_every: int = 50

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        # 0 is allowed so a no-op run can be used to verify determinism
        if self.learning_rate < 0:
            raise ConfigError("learning rate must be non-negative")
        if self.grad_clip <= 0:
            raise ConfigError("gradient clip norm must be positive")
        if self.batch_size < 1:
            raise ConfigError("batch size must be >= 1")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("Adam betas must lie in [0, 1)")


@dataclass
class Episode:
    """Record of one training run."""
    losses: list
    wall_seconds: float
    config: dict
    checkpoint_path: str | None


@dataclass
class AdamState:
    m: dict
    v: dict
    step: int = 0


def init_adam_state(params: dict) -> AdamState:
    return AdamState(m={k: np.zeros_like(v) for k, v in params.items()},
                     v={k: np.zeros_like(v) for k, v in params.items()},
                     step=0)


def adam_update(params: dict, grads: dict, state: AdamState,
                cfg: TrainConfig) -> tuple[dict, AdamState]:
    """Standard bias-corrected Adam; updates `params` arrays in place."""
    state.step += 1
    t = state.step
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ConfigError(f"adam_update: gradient shape {g.shape} != param {p.shape} "
                              f"for {name}")
        state.m[name] = cfg.beta1 * state.m[name] + (1.0 - cfg.beta1) * g
        state.v[name] = cfg.beta2 * state.v[name] + (1.0 - cfg.beta2) * g * g
        m_hat = state.m[name] / (1.0 - cfg.beta1 ** t)
        v_hat = state.v[name] / (1.0 - cfg.beta2 ** t)
        p -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.eps)
    return params, state


def clip_gradients(grads: dict, max_norm: float) -> float:
    """Scale all gradients so their global L2 norm is at most max_norm."""
    total = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if total > max_norm:
        scale = max_norm / total
        for g in grads.values():
            g *= scale
    return total


def _resolve_steps(cfg: TrainConfig, sequence: np.ndarray) -> int:
    limit = sequence.shape[0] - 1
    if limit < 1:
        raise ConfigError("training sequences need at least 2 frames")
    if cfg.teacher_len is None:
        return limit
    if not 1 <= cfg.teacher_len <= limit:
        raise ConfigError(f"teacher_len {cfg.teacher_len} does not fit a "
                          f"{sequence.shape[0]}-frame sequence")
    return cfg.teacher_len


def unrolled_loss(model: Model, topology: MeshTopology, params: dict,
                  sequence: np.ndarray, steps: int) -> T.Tensor:
    """Mean next-frame MSE over `steps` teacher-forced lattice steps."""
    state = LatticeState.zeros(model.config, topology.cells)
    total = None
    for t in range(steps):
        pred, state = lattice_step(model, topology, sequence[t], state, params=params)
        step_loss = T.mse(pred, T.Tensor(sequence[t + 1]))
        total = step_loss if total is None else T.add(total, step_loss)
    return T.mul(total, 1.0 / steps)


def sequence_gradients(model: Model, topology: MeshTopology, sequence: np.ndarray,
                       cfg: TrainConfig) -> tuple[float, dict]:
    """Forward + backward over one sequence; returns (loss, unclipped grads)."""
    steps = _resolve_steps(cfg, sequence)
    params = params_as_tensors(model)
    with T.Tape() as tape:
        loss = unrolled_loss(model, topology, params, sequence, steps)
    tape.backward(loss)
    grads = {name: tape.grad(t) for name, t in params.items()}
    return float(loss.data), grads


def train_step(model: Model, topology: MeshTopology, sequence: np.ndarray,
               cfg: TrainConfig, opt_state: AdamState) -> float:
    """One sequence, one optimizer update; returns the sequence loss."""
    loss, grads = sequence_gradients(model, topology, sequence, cfg)
    clip_gradients(grads, cfg.grad_clip)
    adam_update(named_params(model), grads, opt_state, cfg)
    return loss


def fit(model: Model, train_sequences: list, topology: MeshTopology,
        cfg: TrainConfig, out_dir=None, progress_fn=None,
        resume_from=None) -> Episode:
    """Train over shuffled sequences per epoch, checkpointing on cadence.

    `progress_fn`, when given, receives one dict per epoch
    ({"epoch", "train_mse", "seconds"}). Resuming restores parameters,
    optimizer moments and the epoch counter, so a resumed run replays the
    exact losses of an uninterrupted one.
    """
    if not train_sequences:
        raise ConfigError("fit: empty training set")
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)

    params = named_params(model)
    opt_state = init_adam_state(params)
    start_epoch = 0
    if resume_from is not None:
        start_epoch = load_train_state(resume_from, model, opt_state)

    losses = []
    started = time.perf_counter()
    checkpoint_path = None
    for epoch in range(start_epoch, cfg.epochs):
        rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 3, epoch)))
        order = rng.permutation(len(train_sequences))
        epoch_losses = []
        for pos in range(0, len(order), cfg.batch_size):
            batch = order[pos:pos + cfg.batch_size]
            batch_grads = None
            for idx in batch:
                try:
                    loss, grads = sequence_gradients(model, topology,
                                                     train_sequences[idx], cfg)
                except NumericError as err:
                    raise NumericError(
                        f"training diverged at epoch {epoch}, sequence {idx}: {err}"
                    ) from err
                epoch_losses.append(loss)
                if batch_grads is None:
                    batch_grads = grads
                else:
                    for name in batch_grads:
                        batch_grads[name] += grads[name]
            if len(batch) > 1:
                for name in batch_grads:
                    batch_grads[name] /= len(batch)
            clip_gradients(batch_grads, cfg.grad_clip)
            adam_update(params, batch_grads, opt_state, cfg)
        mean_loss = float(np.mean(epoch_losses))
        losses.append(mean_loss)
        if progress_fn is not None:
            progress_fn({"epoch": epoch, "train_mse": mean_loss,
                         "seconds": time.perf_counter() - started})
        if out is not None and cfg.checkpoint_every > 0 and \
                (epoch + 1) % cfg.checkpoint_every == 0 and epoch + 1 < cfg.epochs:
            save_checkpoint(out / f"checkpoint_epoch_{epoch:04d}", model)
            save_train_state(out / f"train_state_epoch_{epoch:04d}", model,
                             opt_state, epoch + 1)
    if out is not None:
        checkpoint_path = str(save_checkpoint(out / "checkpoint_final", model))
        save_train_state(out / "train_state_final", model, opt_state, cfg.epochs)
    return Episode(losses=losses, wall_seconds=time.perf_counter() - started,
                   config=dataclasses.asdict(cfg), checkpoint_path=checkpoint_path)


# ---------------------------------------------------------------------------
# resumable optimizer state: <base>.json header + <base>.f64 raw arrays
# (params, first moments, second moments, in named order)


def save_train_state(base_path, model: Model, opt_state: AdamState,
                     next_epoch: int) -> Path:
    base = Path(base_path)
    params = named_params(model)
    header = {
        "format": 1,
        "next_epoch": next_epoch,
        "adam_step": opt_state.step,
        "names": list(params),
        "shapes": {k: list(v.shape) for k, v in params.items()},
    }
    with open(base.with_suffix(".json"), "w") as fh:
        json.dump(header, fh, sort_keys=True)
        fh.write("\n")
    with open(base.with_suffix(".f64"), "wb") as fh:
        for group in (params, opt_state.m, opt_state.v):
            for name in params:
                fh.write(np.ascontiguousarray(group[name], dtype="<f8").tobytes())
    return base


def load_train_state(base_path, model: Model, opt_state: AdamState) -> int:
    """Restore params and Adam moments in place; returns the next epoch."""
    base = Path(base_path)
    with open(base.with_suffix(".json")) as fh:
        header = json.load(fh)
    params = named_params(model)
    if header["names"] != list(params):
        raise ConfigError(f"{base}: training state holds {header['names']}, "
                          f"model expects {list(params)}")
    raw = np.fromfile(base.with_suffix(".f64"), dtype="<f8")
    offset = 0
    for group in (params, opt_state.m, opt_state.v):
        for name in params:
            shape = tuple(header["shapes"][name])
            size = int(np.prod(shape))
            if group[name].shape != shape:
                raise ConfigError(f"{base}: array {name} has shape {shape}, "
                                  f"model expects {group[name].shape}")
            group[name][...] = raw[offset:offset + size].reshape(shape)
            offset += size
    if offset != raw.size:
        raise ConfigError(f"{base}: raw payload does not match declared arrays")
    opt_state.step = int(header["adam_step"])
    return int(header["next_epoch"])
