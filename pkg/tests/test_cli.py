import json
from pathlib import Path

import numpy as np
import pytest

from distana import kernels
from distana.cli import main

TINY_DS1 = {"height": 8, "width": 8, "steps": 25, "n_train": 3, "n_test": 2}


def write_config(tmp_path, doc, name="cfg.json") -> str:
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


@pytest.fixture
def tiny_dataset(tmp_path):
    cfg = write_config(tmp_path, TINY_DS1)
    out = tmp_path / "data"
    assert main(["generate", "--dataset", "ds1", "--out", str(out),
                 "--config", cfg, "--seed", "5"]) == 0
    return out


class TestGenerate:
    def test_writes_tree_and_manifest(self, tiny_dataset):
        assert (tiny_dataset / "manifest.json").exists()
        assert (tiny_dataset / "topology.json").exists()
        assert len(list((tiny_dataset / "train").glob("*.f32"))) == 3
        assert len(list((tiny_dataset / "test").glob("*.f32"))) == 2

    def test_same_seed_identical_manifest(self, tmp_path):
        cfg = write_config(tmp_path, TINY_DS1)
        for name in ("a", "b"):
            assert main(["generate", "--dataset", "ds1", "--out",
                         str(tmp_path / name), "--config", cfg, "--seed", "3"]) == 0
        assert ((tmp_path / "a" / "manifest.json").read_bytes()
                == (tmp_path / "b" / "manifest.json").read_bytes())

    def test_cfl_violation_exits_2_naming_bound(self, tmp_path, capsys):
        cfg = write_config(tmp_path, {"wave_speed": 9.0})
        rc = main(["generate", "--dataset", "ds2", "--out", str(tmp_path / "x"),
                   "--config", cfg])
        assert rc == 2
        assert "CFL" in capsys.readouterr().err
        assert not (tmp_path / "x").exists()

    def test_unknown_config_field_rejected(self, tmp_path, capsys):
        cfg = write_config(tmp_path, {"wavelength": 3})
        assert main(["generate", "--dataset", "ds1", "--out", str(tmp_path / "x"),
                     "--config", cfg]) == 2

    def test_csv_format_emits_frames(self, tmp_path):
        cfg = write_config(tmp_path, {"height": 4, "width": 4, "steps": 3,
                                      "n_train": 1, "n_test": 1})
        out = tmp_path / "csv_ds"
        assert main(["generate", "--dataset", "ds2", "--out", str(out),
                     "--config", cfg, "--format", "csv"]) == 0
        assert (out / "train" / "seq_000_csv" / "frame_000.csv").exists()

    def test_variable_speed_dataset(self, tmp_path):
        cfg = write_config(tmp_path, {"height": 6, "width": 6, "steps": 4,
                                      "n_train": 2, "n_test": 1})
        assert main(["generate", "--dataset", "ds1-var", "--out",
                     str(tmp_path / "v"), "--config", cfg]) == 0
        meta = json.loads((tmp_path / "v" / "train" / "seq_000.json").read_text())
        assert meta["meta"]["wave_speed"] != 10.0


class TestTrain:
    def test_smoke_and_artifacts(self, tiny_dataset, tmp_path):
        out = tmp_path / "run"
        rc = main(["train", "--model", "distana", "--lstm-cells", "4",
                   "--data", str(tiny_dataset), "--out", str(out),
                   "--epochs", "2", "--seed", "1"])
        assert rc == 0
        assert (out / "checkpoint_final.json").exists()
        lines = (out / "losses.ndjson").read_text().strip().splitlines()
        assert len(lines) == 2
        assert {"epoch", "train_mse", "seconds"} == set(json.loads(lines[0]))

    def test_missing_data_dir_nonzero(self, tmp_path):
        rc = main(["train", "--model", "distana", "--data",
                   str(tmp_path / "nope"), "--out", str(tmp_path / "o")])
        assert rc != 0

    def test_variant_flags_build_expected_models(self, tiny_dataset, tmp_path):
        out = tmp_path / "v2run"
        rc = main(["train", "--model", "distana-v2", "--data", str(tiny_dataset),
                   "--out", str(out), "--epochs", "1", "--seed", "2"])
        assert rc == 0
        header = json.loads((out / "checkpoint_final.json").read_text())
        assert header["config"]["variant"] == "distana-v2"
        assert header["config"]["lateral_in"] == 8


class TestEvaluate:
    @pytest.fixture
    def trained(self, tiny_dataset, tmp_path):
        out = tmp_path / "run"
        assert main(["train", "--model", "distana", "--data", str(tiny_dataset),
                     "--out", str(out), "--epochs", "2", "--seed", "1"]) == 0
        return out / "checkpoint_final"

    def test_results_and_traces(self, tiny_dataset, trained, tmp_path):
        out = tmp_path / "eval"
        rc = main(["evaluate", "--checkpoints", str(trained), "--data",
                   str(tiny_dataset), "--teacher", "5", "--closed", "15",
                   "--out", str(out), "--no-timing"])
        assert rc == 0
        lines = (out / "results.csv").read_text().strip().splitlines()
        assert lines[0] == "model,params,train_mse,test_mse,inference_seconds"
        names = [line.split(",")[0] for line in lines[1:]]
        assert names[:2] == ["baseline-t-1", "baseline-zero"]
        assert len(names) == 3
        assert all(len(line.split(",")) == 5 for line in lines)
        assert (out / "results.txt").exists()
        traces = list(out.glob("trace_*.csv"))
        assert len(traces) == 1

    def test_protocol_must_fit(self, tiny_dataset, trained, tmp_path):
        rc = main(["evaluate", "--checkpoints", str(trained), "--data",
                   str(tiny_dataset), "--out", str(tmp_path / "e2")])
        assert rc == 2  # 15+65 does not fit 25 frames

    def test_timing_column_populated_when_enabled(self, tiny_dataset, trained,
                                                  tmp_path):
        out = tmp_path / "eval_t"
        rc = main(["evaluate", "--checkpoints", str(trained), "--data",
                   str(tiny_dataset), "--teacher", "5", "--closed", "10",
                   "--out", str(out)])
        assert rc == 0
        rows = (out / "results.csv").read_text().strip().splitlines()[1:]
        assert all(float(r.rsplit(",", 1)[1]) > 0 for r in rows)


class TestRollout:
    def test_outputs(self, tiny_dataset, tmp_path):
        run = tmp_path / "run"
        assert main(["train", "--model", "distana", "--data", str(tiny_dataset),
                     "--out", str(run), "--epochs", "1", "--seed", "4"]) == 0
        out = tmp_path / "roll"
        rc = main(["rollout", "--checkpoint", str(run / "checkpoint_final"),
                   "--data", str(tiny_dataset), "--index", "1", "--teacher", "5",
                   "--closed", "15", "--out", str(out), "--cell", "3,3"])
        assert rc == 0
        assert (out / "predictions.f32").exists()
        assert (out / "step_mse.csv").read_text().startswith("step,mse,regime")
        assert (out / "trace.csv").exists()

    def test_bad_index(self, tiny_dataset, tmp_path):
        run = tmp_path / "run"
        main(["train", "--model", "distana", "--data", str(tiny_dataset),
              "--out", str(run), "--epochs", "1"])
        rc = main(["rollout", "--checkpoint", str(run / "checkpoint_final"),
                   "--data", str(tiny_dataset), "--index", "9",
                   "--teacher", "5", "--closed", "5", "--out", str(tmp_path / "r")])
        assert rc == 2


class TestGradcheck:
    def test_fresh_model_passes(self, capsys):
        rc = main(["gradcheck", "--model", "distana", "--grid", "3x3",
                   "--steps", "4"])
        out = capsys.readouterr().out
        assert rc == 0
        assert "PASS" in out
        assert "w_lstm" in out  # per-parameter-group report

    def test_corrupted_backward_fails(self, monkeypatch, capsys):
        backend = kernels.backend()
        original = backend.lstm_cell_backward

        def corrupted(dh, dc, c_prev, i, f, g, o, tc):
            dz, dc_prev = original(dh, dc, c_prev, i, f, g, o, tc)
            return dz * 1.05, dc_prev

        monkeypatch.setattr(backend, "lstm_cell_backward", corrupted)
        rc = main(["gradcheck", "--model", "distana", "--grid", "3x3",
                   "--steps", "4"])
        assert rc == 1
        assert "FAIL" in capsys.readouterr().out


class TestInfo:
    def test_prints_backend_and_counts(self, capsys):
        assert main(["info"]) == 0
        out = capsys.readouterr().out
        assert "kernel backend" in out
        assert "distana-v3" in out
