import hashlib

import numpy as np
import pytest

from distana.baselines import BaselineKind
from distana.errors import ConfigError
from distana.evaluation import (BaselinePredictor, EvalProtocol,
                                LatticePredictor, ModelEntry, OraclePredictor,
                                baseline_reference_error, closed_loop_error,
                                evaluate_suite, export_traces, model_entry,
                                result_table_csv, result_table_text, rollout,
                                time_inference, write_result_table)
from distana.mesh import BorderMode, grid
from distana.model import Variant, init_params, named_params, save_checkpoint
from distana.training import TrainConfig, sequence_gradients
from distana.wavegen import DatasetKind, Ds1Config, ds1_sequence, sample_dataset


@pytest.fixture(scope="module")
def small_world():
    topo = grid(6, 6, BorderMode.ZERO_PAD)
    model = init_params(Variant.BASE, seed=1)
    seq = ds1_sequence(Ds1Config(height=6, width=6, steps=30, center_x=2.5,
                                 center_y=2.5))
    return topo, model, seq


class TestProtocol:
    def test_defaults(self):
        proto = EvalProtocol()
        assert proto.teacher_steps == 15 and proto.closed_steps == 65
        assert proto.prediction_steps(80) == 79

    def test_must_fit_sequence(self):
        with pytest.raises(ConfigError):
            EvalProtocol(teacher_steps=15, closed_steps=65).prediction_steps(60)

    def test_validation(self):
        with pytest.raises(ConfigError):
            EvalProtocol(teacher_steps=0)
        with pytest.raises(ConfigError):
            EvalProtocol(closed_steps=-1)


class TestRollout:
    def test_zero_closed_steps_is_pure_teacher_forcing(self, small_world):
        topo, model, seq = small_world
        proto = EvalProtocol(teacher_steps=29, closed_steps=0)
        result = rollout(LatticePredictor(model, topo), seq, proto)
        assert result.predictions.shape[0] == 29
        # same numbers as the training-loss decomposition over the sequence
        cfg = TrainConfig(epochs=1)
        loss, _ = sequence_gradients(model, topo, seq, cfg)
        np.testing.assert_allclose(result.step_mse.mean(), loss, rtol=1e-12)

    def test_perfect_oracle_scores_zero(self, small_world):
        _, _, seq = small_world
        proto = EvalProtocol(teacher_steps=5, closed_steps=20)
        result = rollout(OraclePredictor(seq), seq, proto)
        assert result.closed_mse == 0.0
        assert np.all(result.step_mse == 0.0)

    def test_closed_window_length(self, small_world):
        _, _, seq = small_world  # 30 frames
        proto = EvalProtocol(teacher_steps=5, closed_steps=25)
        result = rollout(OraclePredictor(seq), seq, proto)
        # last closed input has no scorable target: 30-1-5 = 24 closed errors
        assert result.predictions.shape[0] == 29
        assert result.step_mse[proto.teacher_steps:].size == 24

    def test_evaluation_does_not_mutate_params(self, small_world):
        topo, model, seq = small_world
        digest_before = hashlib.sha256(
            b"".join(a.tobytes() for a in named_params(model).values())).hexdigest()
        rollout(LatticePredictor(model, topo), seq, EvalProtocol(5, 20))
        digest_after = hashlib.sha256(
            b"".join(a.tobytes() for a in named_params(model).values())).hexdigest()
        assert digest_before == digest_after

    def test_checkpoint_bytes_stable_across_eval(self, small_world, tmp_path):
        topo, model, seq = small_world
        save_checkpoint(tmp_path / "before", model)
        closed_loop_error(LatticePredictor(model, topo), [seq], EvalProtocol(5, 20))
        save_checkpoint(tmp_path / "after", model)
        assert ((tmp_path / "before.f64").read_bytes()
                == (tmp_path / "after.f64").read_bytes())


class TestSuite:
    def test_one_row_per_model_plus_baselines(self, small_world):
        topo, model, seq = small_world
        entries = [model_entry("m1", model, topo),
                   model_entry("m2", init_params(Variant.V2, seed=2), topo)]
        rows = evaluate_suite(entries, [seq], EvalProtocol(5, 20),
                              measure_time=False)
        assert [r.name for r in rows] == ["baseline-t-1", "baseline-zero", "m1", "m2"]

    def test_zero_row_equals_mean_target_power(self, small_world):
        _, _, seq = small_world
        proto = EvalProtocol(5, 20)
        rows = evaluate_suite([], [seq], proto, measure_time=False)
        zero_row = next(r for r in rows if r.name == BaselineKind.ZERO.value)
        steps = proto.prediction_steps(seq.shape[0])
        targets = seq[proto.teacher_steps + 1: steps + 1]
        expected = np.mean([np.mean(f * f) for f in targets])
        assert zero_row.test_error == pytest.approx(expected, rel=1e-12)

    def test_csv_has_declared_columns(self, small_world):
        topo, model, seq = small_world
        rows = evaluate_suite([model_entry("m", model, topo)], [seq],
                              EvalProtocol(5, 20), measure_time=False)
        text = result_table_csv(rows)
        header = text.splitlines()[0].split(",")
        assert header == ["model", "params", "train_mse", "test_mse",
                          "inference_seconds"]
        assert all(len(line.split(",")) == 5 for line in text.splitlines())

    def test_write_table_files(self, small_world, tmp_path):
        topo, model, seq = small_world
        rows = evaluate_suite([model_entry("m", model, topo)], [seq],
                              EvalProtocol(5, 20), measure_time=False)
        write_result_table(rows, csv_path=tmp_path / "r.csv",
                           txt_path=tmp_path / "r.txt")
        assert (tmp_path / "r.csv").read_text().startswith("model,")
        assert "model (#pars)" in (tmp_path / "r.txt").read_text()

    def test_timing_is_positive(self, small_world):
        _, _, seq = small_world
        seconds = time_inference(BaselinePredictor(BaselineKind.ZERO), seq,
                                 EvalProtocol(5, 20), repeats=3)
        assert seconds > 0.0


class TestTraces:
    def test_trace_rows_and_regime_switch(self, small_world):
        topo, model, seq = small_world
        proto = EvalProtocol(teacher_steps=15, closed_steps=14)
        result = rollout(LatticePredictor(model, topo), seq, proto)
        text = export_traces(result, seq, (2, 3))
        lines = text.strip().splitlines()
        assert lines[0] == "step,target,prediction,regime"
        assert len(lines) - 1 == seq.shape[0] - 1
        regimes = [line.split(",")[3] for line in lines[1:]]
        assert regimes[14] == "teacher" and regimes[15] == "closed"
        assert all(r == "teacher" for r in regimes[:15])
        assert all(r == "closed" for r in regimes[15:])

    def test_trace_targets_match_generator(self, small_world):
        topo, model, seq = small_world
        proto = EvalProtocol(5, 20)
        result = rollout(LatticePredictor(model, topo), seq, proto)
        text = export_traces(result, seq, (1, 4))
        for t, line in enumerate(text.strip().splitlines()[1:]):
            target = float(line.split(",")[1])
            assert target == seq[t + 1, 1, 4]

    def test_cell_out_of_range(self, small_world):
        topo, model, seq = small_world
        result = rollout(LatticePredictor(model, topo), seq, EvalProtocol(5, 20))
        with pytest.raises(ConfigError):
            export_traces(result, seq, (99, 0))


class TestOrderingSanity:
    def test_reference_baselines_on_ds1_defaults(self):
        ds = sample_dataset(DatasetKind.DS1, 1, 4, seed=5)
        proto = EvalProtocol()
        rows = evaluate_suite([], ds.test, proto, measure_time=False)
        by_name = {r.name: r.test_error for r in rows}
        assert by_name["baseline-t-1"] < by_name["baseline-zero"]
