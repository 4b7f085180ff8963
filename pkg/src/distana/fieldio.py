"""File formats for wave fields and datasets.

A field is stored as a pair of files sharing a base path: `<base>.json`
(sidecar: shape, dtype, byte order, metadata) and `<base>.f32` (raw
little-endian float32, row-major). Values are generated in float64 and
stored as float32 to halve disk use; loading widens back to float64.

A dataset directory holds train/ and test/ subdirectories plus a
manifest.json listing every sequence with its sha256, so two runs with
the same seed produce byte-identical trees.
"""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .util import sha256_file
from .wavegen import DatasetKind, Ds1Config, Ds2Config, WaveDataset

SIDECAR_SUFFIX = ".json"
RAW_SUFFIX = ".f32"


def save_field(base_path, field: np.ndarray, meta: dict | None = None) -> None:
    base = Path(base_path)
    arr = np.asarray(field, dtype=np.float64)
    if arr.ndim != 3:
        raise ConfigError(f"fields are (T, H, W); got shape {arr.shape}")
    sidecar = {
        "shape": list(arr.shape),
        "dtype": "f32",
        "order": "row-major",
        "meta": meta or {},
    }
    base.parent.mkdir(parents=True, exist_ok=True)
    with open(base.with_suffix(SIDECAR_SUFFIX), "w") as fh:
        json.dump(sidecar, fh, sort_keys=True)
        fh.write("\n")
    arr.astype("<f4").tofile(base.with_suffix(RAW_SUFFIX))


def load_field(base_path) -> tuple[np.ndarray, dict]:
    base = Path(base_path)
    with open(base.with_suffix(SIDECAR_SUFFIX)) as fh:
        sidecar = json.load(fh)
    shape = tuple(sidecar["shape"])
    raw = np.fromfile(base.with_suffix(RAW_SUFFIX), dtype="<f4")
    if raw.size != int(np.prod(shape)):
        raise ConfigError(
            f"{base}: raw payload has {raw.size} values, sidecar says {shape}")
    return raw.astype(np.float64).reshape(shape), sidecar.get("meta", {})


def export_frames_csv(directory, field: np.ndarray) -> None:
    """One CSV per frame, for eyeballing; not part of the load path."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    for k, frame in enumerate(np.asarray(field)):
        np.savetxt(out / f"frame_{k:03d}.csv", frame, delimiter=",", fmt="%.9g")


def _config_meta(cfg) -> dict:
    return dataclasses.asdict(cfg)


def _config_from_meta(kind: DatasetKind, meta: dict):
    cls = Ds2Config if kind is DatasetKind.DS2 else Ds1Config
    fields = {f.name for f in dataclasses.fields(cls)}
    return cls(**{k: v for k, v in meta.items() if k in fields})


def write_dataset(directory, dataset: WaveDataset, csv_frames: bool = False) -> Path:
    """Write train/test field files plus manifest.json; returns the manifest path."""
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    manifest = {
        "format_version": 1,
        "dataset": dataset.kind.value,
        "seed": dataset.seed,
        "train": [],
        "test": [],
    }
    for split, seqs, cfgs in (("train", dataset.train, dataset.train_configs),
                              ("test", dataset.test, dataset.test_configs)):
        for i, (seq, cfg) in enumerate(zip(seqs, cfgs)):
            rel = f"{split}/seq_{i:03d}"
            save_field(root / rel, seq, meta=_config_meta(cfg))
            if csv_frames:
                export_frames_csv(root / f"{rel}_csv", seq)
            manifest[split].append({
                "path": rel,
                "sha256": sha256_file((root / rel).with_suffix(RAW_SUFFIX)),
            })
    manifest_path = root / "manifest.json"
    with open(manifest_path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest_path


def read_dataset(directory) -> WaveDataset:
    root = Path(directory)
    manifest_path = root / "manifest.json"
    if not manifest_path.exists():
        raise FileNotFoundError(f"no manifest.json under {root}")
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    kind = DatasetKind(manifest["dataset"])
    splits = {}
    for split in ("train", "test"):
        seqs, cfgs = [], []
        for entry in manifest[split]:
            arr, meta = load_field(root / entry["path"])
            seqs.append(arr)
            cfgs.append(_config_from_meta(kind, meta))
        splits[split] = (seqs, cfgs)
    return WaveDataset(kind=kind,
                       train=splits["train"][0], test=splits["test"][0],
                       train_configs=splits["train"][1], test_configs=splits["test"][1],
                       seed=int(manifest.get("seed", 0)))
