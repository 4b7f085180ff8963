"""Closed-loop evaluation: rollouts, metric tables, trace export.

A rollout feeds ground-truth frames for `teacher_steps` inputs, then lets
the model consume its own previous prediction for the remaining steps.
Per-step MSE against the true next frame is recorded throughout; the
reported test error averages the closed-loop steps only. With an 80-frame
sequence and the default 15+65 protocol the last closed-loop input has no
scorable target, so 64 step errors enter the mean.

Baseline rows report the paper-style upper bounds: the identity and zero
predictors scored on true inputs over the same closed-loop window. (A
self-fed identity predictor would freeze the last teacher-forced frame;
`rollout` still behaves that way for any predictor, including baselines.)
"""

from __future__ import annotations

import csv
import io
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .baselines import BaselineKind, baseline_predict
from .errors import ConfigError
from .mesh import MeshTopology
from .model import Model, LatticeState, lattice_step, named_params, param_count
from . import tape as T
from .util import worker_count


@dataclass(frozen=True)
class EvalProtocol:
    teacher_steps: int = 15
    closed_steps: int = 65

    def __post_init__(self):
        if self.teacher_steps < 1:
            raise ConfigError("at least one teacher-forced step is required")
        if self.closed_steps < 0:
            raise ConfigError("closed_steps must be non-negative")

    def prediction_steps(self, sequence_length: int) -> int:
        if self.teacher_steps + self.closed_steps > sequence_length:
            raise ConfigError(
                f"protocol {self.teacher_steps}+{self.closed_steps} does not fit a "
                f"{sequence_length}-frame sequence")
        return min(self.teacher_steps + self.closed_steps, sequence_length - 1)


class LatticePredictor:
    """Stateful lattice wrapper with the rollout interface."""

    def __init__(self, model: Model, topology: MeshTopology):
        self.model = model
        self.topology = topology
        self._params = {name: T.Tensor(arr) for name, arr in named_params(model).items()}

    def start(self) -> LatticeState:
        return LatticeState.zeros(self.model.config, self.topology.cells)

    def step(self, state, frame: np.ndarray):
        pred, state = lattice_step(self.model, self.topology, frame, state,
                                   params=self._params)
        return pred.data, state


class BaselinePredictor:
    def __init__(self, kind: BaselineKind):
        self.kind = BaselineKind(kind)

    def start(self):
        return None

    def step(self, state, frame: np.ndarray):
        return baseline_predict(self.kind, frame), None


class OraclePredictor:
    """Test stub that replays the true next frame of a known sequence."""

    def __init__(self, sequence: np.ndarray):
        self.sequence = sequence

    def start(self):
        return 0

    def step(self, t, frame):
        return self.sequence[t + 1], t + 1


@dataclass
class RolloutResult:
    predictions: np.ndarray   # (steps, H, W)
    step_mse: np.ndarray      # (steps,)
    teacher_steps: int

    @property
    def closed_mse(self) -> float:
        closed = self.step_mse[self.teacher_steps:]
        return float(closed.mean()) if closed.size else float("nan")

    @property
    def teacher_mse(self) -> float:
        return float(self.step_mse[:self.teacher_steps].mean())


def rollout(predictor, sequence: np.ndarray, protocol: EvalProtocol) -> RolloutResult:
    """Teacher-forced then self-fed prediction over one sequence."""
    steps = protocol.prediction_steps(sequence.shape[0])
    preds = np.empty((steps,) + sequence.shape[1:])
    errs = np.empty(steps)
    state = predictor.start()
    for t in range(steps):
        frame = sequence[t] if t < protocol.teacher_steps else preds[t - 1]
        pred, state = predictor.step(state, frame)
        preds[t] = pred
        diff = pred - sequence[t + 1]
        errs[t] = float(np.mean(diff * diff))
    return RolloutResult(predictions=preds, step_mse=errs,
                         teacher_steps=min(protocol.teacher_steps, steps))


def baseline_reference_error(kind: BaselineKind, sequence: np.ndarray,
                             protocol: EvalProtocol) -> float:
    """Closed-window error of the baseline applied to true inputs."""
    steps = protocol.prediction_steps(sequence.shape[0])
    errs = []
    for t in range(protocol.teacher_steps, steps):
        diff = baseline_predict(kind, sequence[t]) - sequence[t + 1]
        errs.append(float(np.mean(diff * diff)))
    return float(np.mean(errs)) if errs else float("nan")


def closed_loop_error(predictor, sequences: list, protocol: EvalProtocol) -> float:
    """Mean closed-loop MSE over a list of sequences."""
    workers = min(worker_count(), len(sequences))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda s: rollout(predictor, s, protocol).closed_mse,
                                    sequences))
    else:
        results = [rollout(predictor, s, protocol).closed_mse for s in sequences]
    return float(np.mean(results))


def time_inference(predictor, sequence: np.ndarray, protocol: EvalProtocol,
                   repeats: int = 5) -> float:
    """Median wall-clock seconds for the bare prediction loop over one sequence."""
    steps = protocol.prediction_steps(sequence.shape[0])
    samples = []
    for _ in range(repeats):
        state = predictor.start()
        prev = sequence[0]
        t0 = time.perf_counter()
        for t in range(steps):
            frame = sequence[t] if t < protocol.teacher_steps else prev
            prev, state = predictor.step(state, frame)
        samples.append(time.perf_counter() - t0)
    return statistics.median(samples)


@dataclass
class ResultRow:
    name: str
    params: int
    train_error: float | None
    test_error: float
    inference_seconds: float | None


@dataclass
class ModelEntry:
    name: str
    predictor: object
    params: int
    train_error: float | None = None


def evaluate_suite(entries: list, test_sequences: list, protocol: EvalProtocol,
                   include_baselines: bool = True,
                   measure_time: bool = True) -> list:
    """One ResultRow per model (baselines first, added automatically)."""
    if not test_sequences:
        raise ConfigError("evaluate_suite: empty test set")
    rows = []
    timing_seq = test_sequences[0]
    if include_baselines:
        for kind in (BaselineKind.LAST_FRAME, BaselineKind.ZERO):
            err = float(np.mean([baseline_reference_error(kind, s, protocol)
                                 for s in test_sequences]))
            seconds = None
            if measure_time:
                seconds = time_inference(BaselinePredictor(kind), timing_seq, protocol)
            rows.append(ResultRow(name=kind.value, params=0, train_error=None,
                                  test_error=err, inference_seconds=seconds))
    for entry in entries:
        err = closed_loop_error(entry.predictor, test_sequences, protocol)
        seconds = None
        if measure_time:
            seconds = time_inference(entry.predictor, timing_seq, protocol)
        rows.append(ResultRow(name=entry.name, params=entry.params,
                              train_error=entry.train_error, test_error=err,
                              inference_seconds=seconds))
    return rows


def model_entry(name: str, model: Model, topology: MeshTopology,
                train_error: float | None = None) -> ModelEntry:
    return ModelEntry(name=name, predictor=LatticePredictor(model, topology),
                      params=param_count(model), train_error=train_error)


CSV_COLUMNS = ("model", "params", "train_mse", "test_mse", "inference_seconds")


def _fmt(value, digits=6) -> str:
    if value is None:
        return ""
    return f"{value:.{digits}e}" if isinstance(value, float) else str(value)


def result_table_csv(rows: list) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in rows:
        writer.writerow([r.name, r.params, _fmt(r.train_error), _fmt(r.test_error),
                         _fmt(r.inference_seconds)])
    return buf.getvalue()


def result_table_text(rows: list) -> str:
    headers = ("model (#pars)", "train error", "test error", "inf. time")
    body = [(f"{r.name} ({r.params})",
             _fmt(r.train_error, 2) or "-",
             _fmt(r.test_error, 2),
             (f"{r.inference_seconds:.4f}s" if r.inference_seconds is not None else "-"))
            for r in rows]
    widths = [max(len(h), *(len(row[i]) for row in body)) for i, h in enumerate(headers)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths)).rstrip()]
    lines.append("  ".join("-" * w for w in widths))
    for row in body:
        lines.append("  ".join(v.ljust(w) for v, w in zip(row, widths)).rstrip())
    return "\n".join(lines) + "\n"


def write_result_table(rows: list, csv_path=None, txt_path=None) -> str:
    text = result_table_csv(rows)
    if csv_path is not None:
        Path(csv_path).write_text(text)
    if txt_path is not None:
        Path(txt_path).write_text(result_table_text(rows))
    return text


def export_traces(result: RolloutResult, sequence: np.ndarray, cell: tuple,
                  path=None) -> str:
    """Per-step CSV of target vs prediction at one grid cell."""
    row_idx, col_idx = cell
    if not (0 <= row_idx < sequence.shape[1] and 0 <= col_idx < sequence.shape[2]):
        raise ConfigError(f"trace cell {cell} outside a "
                          f"{sequence.shape[1]}x{sequence.shape[2]} field")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("step", "target", "prediction", "regime"))
    for t in range(result.predictions.shape[0]):
        regime = "teacher" if t < result.teacher_steps else "closed"
        writer.writerow((t, repr(float(sequence[t + 1, row_idx, col_idx])),
                         repr(float(result.predictions[t, row_idx, col_idx])), regime))
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text
