"""Command-line entry point: generate / train / evaluate / rollout /
gradcheck / info.

Exit codes: 0 success, 2 configuration error, 3 numeric failure
(NaN/divergence), 4 I/O error. Every command validates its configuration
before touching the filesystem, and every command taking --seed is
bit-reproducible end to end.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, kernels
from . import tape as T
from .errors import ConfigError, NumericError, ShapeError
from .evaluation import (EvalProtocol, LatticePredictor, evaluate_suite,
                         export_traces, model_entry, rollout,
                         write_result_table)
from .fieldio import read_dataset, save_field, write_dataset
from .mesh import BorderMode, grid
from .model import (Variant, init_params, load_checkpoint, named_params,
                    param_count, variant_config)
from .training import TrainConfig, fit, unrolled_loss
from .wavegen import (DatasetKind, Ds1Config, Ds2Config,
                      DEFAULT_TEST_SEQUENCES, DEFAULT_TRAIN_SEQUENCES,
                      sample_dataset)

GRADCHECK_TOL = 1e-4

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_IO = 4


def _load_json(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def _parse_cell(text: str) -> tuple:
    try:
        row, col = (int(p) for p in text.split(","))
    except ValueError as err:
        raise ConfigError(f"--cell expects 'row,col', got {text!r}") from err
    return row, col


def _parse_grid(text: str) -> tuple:
    try:
        h, w = (int(p) for p in text.lower().split("x"))
    except ValueError as err:
        raise ConfigError(f"--grid expects 'HxW', got {text!r}") from err
    return h, w


def _dataset_config(kind: DatasetKind, overrides: dict):
    cls = Ds2Config if kind is DatasetKind.DS2 else Ds1Config
    fields = {f.name for f in dataclasses.fields(cls)}
    unknown = set(overrides) - fields
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} fields: {sorted(unknown)}")
    return cls(**overrides)


def cmd_generate(args) -> int:
    kind = DatasetKind(args.dataset)
    overrides = {}
    n_train, n_test = DEFAULT_TRAIN_SEQUENCES, DEFAULT_TEST_SEQUENCES
    if args.config:
        doc = _load_json(args.config)
        n_train = doc.pop("n_train", n_train)
        n_test = doc.pop("n_test", n_test)
        overrides = doc
    if args.n_train is not None:
        n_train = args.n_train
    if args.n_test is not None:
        n_test = args.n_test
    base = _dataset_config(kind, overrides)
    dataset = sample_dataset(kind, n_train, n_test, base, seed=args.seed)
    out = Path(args.out)
    manifest = write_dataset(out, dataset, csv_frames=(args.format == "csv"))
    topology = grid(base.height, base.width, BorderMode.ZERO_PAD)
    (out / "topology.json").write_text(topology.to_json() + "\n")
    print(f"wrote {n_train} train + {n_test} test sequences "
          f"({base.steps}x{base.height}x{base.width}) to {out}")
    print(f"manifest: {manifest}")
    return EXIT_OK


def cmd_train(args) -> int:
    overrides = _load_json(args.config) if args.config else {}
    for key, flag in (("epochs", args.epochs), ("learning_rate", args.lr),
                      ("seed", args.seed), ("batch_size", args.batch_size),
                      ("grad_clip", args.grad_clip), ("teacher_len", args.teacher_len),
                      ("checkpoint_every", args.checkpoint_every)):
        if flag is not None:
            overrides[key] = flag
    cfg = TrainConfig(**overrides)
    dataset = read_dataset(args.data)
    if not dataset.train:
        raise ConfigError(f"dataset under {args.data} has no training sequences")
    topology = grid(dataset.height, dataset.width, BorderMode.ZERO_PAD)
    model = init_params(Variant(args.model), lstm_cells=args.lstm_cells, seed=cfg.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    log_path = out / "losses.ndjson"
    with open(log_path, "w") as log:
        def progress(record):
            line = json.dumps(record)
            log.write(line + "\n")
            print(line)
        episode = fit(model, dataset.train, topology, cfg, out_dir=out,
                      progress_fn=progress, resume_from=args.resume)
    print(f"final train mse {episode.losses[-1]:.6e} after {len(episode.losses)} "
          f"epochs ({episode.wall_seconds:.1f}s); checkpoint: {episode.checkpoint_path}")
    return EXIT_OK


def _row_name(path: Path) -> str:
    stem = path.stem if path.suffix in (".json", ".f64") else path.name
    if stem.startswith("checkpoint") and path.parent.name:
        return path.parent.name
    return stem


def _train_error_near(path: Path):
    log = path.parent / "losses.ndjson"
    if not log.exists():
        return None
    last = None
    with open(log) as fh:
        for line in fh:
            line = line.strip()
            if line:
                last = json.loads(line)
    return None if last is None else float(last["train_mse"])


def cmd_evaluate(args) -> int:
    protocol = EvalProtocol(teacher_steps=args.teacher, closed_steps=args.closed)
    dataset = read_dataset(args.data)
    if not dataset.test:
        raise ConfigError(f"dataset under {args.data} has no test sequences")
    topology = grid(dataset.height, dataset.width, BorderMode.ZERO_PAD)
    entries = []
    for ckpt in args.checkpoints:
        path = Path(ckpt)
        model = load_checkpoint(path.with_suffix(""))
        entries.append(model_entry(_row_name(path), model, topology,
                                   train_error=_train_error_near(path)))
    rows = evaluate_suite(entries, dataset.test, protocol,
                          measure_time=not args.no_timing)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_result_table(rows, csv_path=out / "results.csv", txt_path=out / "results.txt")
    cell = _parse_cell(args.trace_cell) if args.trace_cell else (
        dataset.height // 2, dataset.width // 2)
    for entry in entries:
        result = rollout(entry.predictor, dataset.test[0], protocol)
        export_traces(result, dataset.test[0], cell,
                      path=out / f"trace_{entry.name}.csv")
    print((out / "results.txt").read_text(), end="")
    print(f"tables and traces written to {out}")
    return EXIT_OK


def cmd_rollout(args) -> int:
    protocol = EvalProtocol(teacher_steps=args.teacher, closed_steps=args.closed)
    dataset = read_dataset(args.data)
    sequences = dataset.test if args.split == "test" else dataset.train
    if not 0 <= args.index < len(sequences):
        raise ConfigError(f"--index {args.index} out of range for {len(sequences)} "
                          f"{args.split} sequences")
    sequence = sequences[args.index]
    path = Path(args.checkpoint)
    model = load_checkpoint(path.with_suffix(""))
    topology = grid(dataset.height, dataset.width, BorderMode.ZERO_PAD)
    result = rollout(LatticePredictor(model, topology), sequence, protocol)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_field(out / "predictions", result.predictions,
               meta={"source": f"{args.split}[{args.index}]",
                     "teacher_steps": protocol.teacher_steps,
                     "closed_steps": protocol.closed_steps})
    with open(out / "step_mse.csv", "w") as fh:
        fh.write("step,mse,regime\n")
        for t, v in enumerate(result.step_mse):
            regime = "teacher" if t < result.teacher_steps else "closed"
            fh.write(f"{t},{v!r},{regime}\n")
    cell = _parse_cell(args.cell) if args.cell else (
        dataset.height // 2, dataset.width // 2)
    export_traces(result, sequence, cell, path=out / "trace.csv")
    print(f"closed-loop mse {result.closed_mse:.6e} "
          f"(teacher {result.teacher_mse:.6e}); outputs in {out}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    height, width = _parse_grid(args.grid)
    steps = args.steps
    cfg = Ds1Config(height=height, width=width, steps=steps + 1,
                    center_x=(width - 1) / 2.0, center_y=(height - 1) / 2.0)
    from .wavegen import ds1_sequence
    sequence = ds1_sequence(cfg)
    topology = grid(height, width, BorderMode.ZERO_PAD)
    model = init_params(Variant(args.model), lstm_cells=args.lstm_cells, seed=args.seed)
    names = list(named_params(model))

    def loss_fn(*tensors):
        params = dict(zip(names, tensors))
        return unrolled_loss(model, topology, params, sequence, steps)

    points = {name: T.Tensor(arr, requires_grad=True)
              for name, arr in named_params(model).items()}
    errors = T.gradcheck_groups(loss_fn, points, eps=args.eps)
    worst = max(errors.values())
    print(f"gradcheck {args.model} on {height}x{width}, {steps}-step unrolled loss "
          f"({param_count(model)} parameters)")
    for name, err in errors.items():
        print(f"  {name:8s} max relative error {err:.3e}")
    status = "PASS" if worst <= GRADCHECK_TOL else "FAIL"
    print(f"max relative error {worst:.3e} (tolerance {GRADCHECK_TOL:.0e}): {status}")
    return EXIT_OK if worst <= GRADCHECK_TOL else 1


def cmd_info(args) -> int:
    print(f"distana {__version__}")
    print(f"kernel backend: {kernels.active_backend()} "
          f"(available: {', '.join(kernels.available_backends())})")
    print(f"default protocol: 15 teacher-forced steps, 65 closed-loop steps")
    print("variant parameter counts:")
    for variant in Variant:
        for cells in (4, 26):
            m = init_params(variant, lstm_cells=cells)
            label = f"{variant.value} (lstm_cells={cells})"
            print(f"  {label:32s} {param_count(m):5d}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="distana",
                                     description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate a wave dataset")
    p.add_argument("--dataset", required=True, choices=[k.value for k in DatasetKind])
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="JSON file with generator fields / n_train / n_test")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-train", type=int, default=None)
    p.add_argument("--n-test", type=int, default=None)
    p.add_argument("--format", choices=["f32", "csv"], default="f32",
                   help="csv additionally dumps one CSV per frame")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train a lattice model on a dataset")
    p.add_argument("--model", required=True, choices=[v.value for v in Variant])
    p.add_argument("--lstm-cells", type=int, default=4)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="JSON file with TrainConfig fields")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--grad-clip", type=float, default=None)
    p.add_argument("--teacher-len", type=int, default=None)
    p.add_argument("--checkpoint-every", type=int, default=None)
    p.add_argument("--resume", help="training-state file to resume from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="closed-loop evaluation of checkpoints")
    p.add_argument("--checkpoints", required=True, nargs="+")
    p.add_argument("--data", required=True)
    p.add_argument("--teacher", type=int, default=15)
    p.add_argument("--closed", type=int, default=65)
    p.add_argument("--out", required=True)
    p.add_argument("--trace-cell", help="row,col for trace export (default: center)")
    p.add_argument("--no-timing", action="store_true",
                   help="omit inference timing so tables are bit-reproducible")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("rollout", help="roll one sequence and dump predictions")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=["train", "test"], default="test")
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--teacher", type=int, default=15)
    p.add_argument("--closed", type=int, default=65)
    p.add_argument("--out", required=True)
    p.add_argument("--cell", help="row,col for trace export (default: center)")
    p.set_defaults(func=cmd_rollout)

    p = sub.add_parser("gradcheck", help="compare tape gradients to finite differences")
    p.add_argument("--model", default=Variant.BASE.value,
                   choices=[v.value for v in Variant])
    p.add_argument("--lstm-cells", type=int, default=4)
    p.add_argument("--grid", default="4x4")
    p.add_argument("--steps", type=int, default=12)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--eps", type=float, default=1e-4,
                   help="finite-difference step; large enough that the "
                        "difference signal clears the loss's roundoff floor "
                        "even for near-zero gradient coordinates")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("info", help="print version, backend and model sizes")
    p.set_defaults(func=cmd_info)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ShapeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as err:
        print(f"numeric failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as err:
        print(f"i/o error: {err}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
