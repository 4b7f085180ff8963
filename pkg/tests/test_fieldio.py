import json

import numpy as np
import pytest

from distana.errors import ConfigError
from distana.fieldio import (export_frames_csv, load_field, read_dataset,
                             save_field, write_dataset)
from distana.wavegen import DatasetKind, sample_dataset


@pytest.fixture
def small_dataset():
    return sample_dataset(DatasetKind.DS1, 3, 2, seed=9)


class TestFieldFiles:
    def test_round_trip_is_bit_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        field = rng.normal(size=(5, 4, 3))
        save_field(tmp_path / "a", field, meta={"tag": 1})
        loaded, meta = load_field(tmp_path / "a")
        assert meta == {"tag": 1}
        # values survive exactly as their f32 cast, widened back to f64
        np.testing.assert_array_equal(loaded, field.astype("<f4").astype(np.float64))
        save_field(tmp_path / "b", loaded)
        assert (tmp_path / "a.f32").read_bytes() == (tmp_path / "b.f32").read_bytes()

    def test_sidecar_schema(self, tmp_path):
        save_field(tmp_path / "x", np.zeros((2, 3, 4)))
        doc = json.loads((tmp_path / "x.json").read_text())
        assert doc["shape"] == [2, 3, 4]
        assert doc["dtype"] == "f32"
        assert doc["order"] == "row-major"

    def test_truncated_payload_rejected(self, tmp_path):
        save_field(tmp_path / "x", np.zeros((2, 3, 4)))
        raw = (tmp_path / "x.f32").read_bytes()
        (tmp_path / "x.f32").write_bytes(raw[:-8])
        with pytest.raises(ConfigError):
            load_field(tmp_path / "x")

    def test_non_field_shape_rejected(self, tmp_path):
        with pytest.raises(ConfigError):
            save_field(tmp_path / "x", np.zeros((4, 4)))

    def test_csv_export(self, tmp_path):
        field = np.arange(24, dtype=np.float64).reshape(2, 3, 4)
        export_frames_csv(tmp_path / "csv", field)
        files = sorted(p.name for p in (tmp_path / "csv").iterdir())
        assert files == ["frame_000.csv", "frame_001.csv"]
        back = np.loadtxt(tmp_path / "csv" / "frame_001.csv", delimiter=",")
        np.testing.assert_allclose(back, field[1])


class TestDatasetFiles:
    def test_write_read_round_trip(self, tmp_path, small_dataset):
        write_dataset(tmp_path, small_dataset)
        back = read_dataset(tmp_path)
        assert back.kind == small_dataset.kind
        assert len(back.train) == 3 and len(back.test) == 2
        for orig, loaded in zip(small_dataset.train, back.train):
            np.testing.assert_array_equal(loaded, orig.astype("<f4").astype(np.float64))
        for orig, loaded in zip(small_dataset.train_configs, back.train_configs):
            assert loaded == orig

    def test_manifest_identical_across_runs(self, tmp_path, small_dataset):
        write_dataset(tmp_path / "one", small_dataset)
        write_dataset(tmp_path / "two", small_dataset)
        assert ((tmp_path / "one" / "manifest.json").read_bytes()
                == (tmp_path / "two" / "manifest.json").read_bytes())

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            read_dataset(tmp_path / "nope")
