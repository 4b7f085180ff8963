#!/usr/bin/env python3
"""Benchmark the numba kernels against the pure-numpy fallback.

Times each hot kernel on training-sized inputs, plus one end-to-end
training step and one closed-loop rollout, under both backends. Run from
the repository root:

    python benchmarks/bench_backends.py [--repeats 200]
"""

import argparse
import time

import numpy as np

from distana import kernels
from distana.evaluation import EvalProtocol, LatticePredictor, rollout
from distana.mesh import BorderMode, grid
from distana.model import Variant, init_params, named_params
from distana.training import TrainConfig, init_adam_state, train_step
from distana.wavegen import DatasetKind, Ds2Config, ds2_sequence, sample_dataset


def timeit(fn, repeats):
    fn()  # warmup / JIT
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - t0) / repeats


def kernel_cases():
    rng = np.random.default_rng(0)
    cells, h = 256, 4
    z = rng.normal(size=(cells, 4 * h))
    c_prev = rng.normal(size=(cells, h))
    cache = kernels.backend().lstm_cell_forward(z, c_prev)
    dh = rng.normal(size=(cells, h))
    dc = rng.normal(size=(cells, h))
    topo = grid(16, 16, BorderMode.ZERO_PAD)
    idx = topo.neighbor_index
    buf1 = rng.normal(size=(cells, 1))
    buf8 = rng.normal(size=(cells, 8))
    slots = np.arange(8, dtype=np.int64)
    grad8 = rng.normal(size=(cells, 8))
    prev = rng.normal(size=(16, 16))
    curr = rng.normal(size=(16, 16))
    return {
        "lstm_cell_forward": lambda k: k.lstm_cell_forward(z, c_prev),
        "lstm_cell_backward": lambda k: k.lstm_cell_backward(
            dh, dc, c_prev, *cache[2:]),
        "gather_sum": lambda k: k.gather_sum(buf1, idx),
        "gather_sum_backward": lambda k: k.gather_sum_backward(buf1, idx),
        "gather_slot": lambda k: k.gather_slot(buf8, idx, slots),
        "gather_slot_backward": lambda k: k.gather_slot_backward(
            grad8, idx, slots, 8),
        "wave2d_step": lambda k: k.wave2d_step(prev, curr, 0.09, 0.09),
        "ds1_frame": lambda k: k.ds1_frame(16, 16, 7.5, 7.5, 4.0, 0.25),
    }


def end_to_end_cases():
    topo = grid(16, 16, BorderMode.ZERO_PAD)
    ds = sample_dataset(DatasetKind.DS1, 2, 1, seed=0)
    proto = EvalProtocol(teacher_steps=15, closed_steps=65)

    def bench_train_step():
        model = init_params(Variant.BASE, seed=0)
        state = init_adam_state(named_params(model))
        train_step(model, topo, ds.train[0], TrainConfig(), state)

    def bench_rollout():
        model = init_params(Variant.V3, seed=0)
        rollout(LatticePredictor(model, topo), ds.train[1], proto)

    def bench_ds2():
        ds2_sequence(Ds2Config(steps=80, center_x=7.5, center_y=7.5))

    return {
        "train_step (80x16x16, base)": bench_train_step,
        "rollout (15+65, v3)": bench_rollout,
        "ds2_sequence (80x16x16)": bench_ds2,
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=200,
                        help="repeats per kernel case")
    parser.add_argument("--e2e-repeats", type=int, default=5,
                        help="repeats per end-to-end case")
    args = parser.parse_args()

    backends = kernels.available_backends()
    if "numba" not in backends:
        print("numba not importable; nothing to compare")
        return

    print(f"{'kernel':28s} {'numpy':>12s} {'numba':>12s} {'speedup':>8s}")
    for name, case in kernel_cases().items():
        times = {}
        for backend_name in ("numpy", "numba"):
            with kernels.use_backend(backend_name) as backend:
                times[backend_name] = timeit(lambda: case(backend), args.repeats)
        print(f"{name:28s} {times['numpy']*1e6:10.1f}us {times['numba']*1e6:10.1f}us "
              f"{times['numpy']/times['numba']:7.1f}x")

    print()
    print(f"{'end to end':28s} {'numpy':>12s} {'numba':>12s} {'speedup':>8s}")
    for name, case in end_to_end_cases().items():
        times = {}
        for backend_name in ("numpy", "numba"):
            with kernels.use_backend(backend_name):
                times[backend_name] = timeit(case, args.e2e_repeats)
        print(f"{name:28s} {times['numpy']*1e3:10.2f}ms {times['numba']*1e3:10.2f}ms "
              f"{times['numpy']/times['numba']:7.1f}x")


if __name__ == "__main__":
    main()
