"""Checkpoint container: JSON header plus named binary tensors.

Layout (little-endian):
  magic "DLGC" | version u32 | header_len u32 | header JSON (utf-8) |
  count u32 | count x (name_len u32 | name utf-8 | tensor blob).
Tensor names are written in lexicographic order so equal state produces
byte-identical files. The header carries the model config fingerprint and,
for training checkpoints, iteration, optimizer hyperparameters, and the
exact RNG state, which is what makes resume bitwise-reproducible.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import UsageError
from .network import ModelConfig, SRNetwork, build_model
from .tensor import read_array, write_array

_MAGIC = b"DLGC"
_VERSION = 1

KIND_WEIGHTS = "weights"
KIND_TRAIN = "train"

_DTYPE_NAME = {np.dtype(np.float32): "f32", np.dtype(np.float64): "f64"}
_NAME_DTYPE = {"f32": np.float32, "f64": np.float64}


def write_container(path: str | Path, header: dict, arrays: dict[str, np.ndarray]):
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fp:
        fp.write(_MAGIC)
        fp.write(struct.pack("<II", _VERSION, len(blob)))
        fp.write(blob)
        fp.write(struct.pack("<I", len(arrays)))
        for name in sorted(arrays):
            enc = name.encode("utf-8")
            fp.write(struct.pack("<I", len(enc)))
            fp.write(enc)
            write_array(fp, arrays[name])


def read_container(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as fp:
        if fp.read(4) != _MAGIC:
            raise UsageError(f"{path}: not a checkpoint file (bad magic)")
        version, hlen = struct.unpack("<II", fp.read(8))
        if version != _VERSION:
            raise UsageError(f"{path}: unsupported checkpoint version {version}")
        header = json.loads(fp.read(hlen).decode("utf-8"))
        (count,) = struct.unpack("<I", fp.read(4))
        arrays = {}
        for _ in range(count):
            (nlen,) = struct.unpack("<I", fp.read(4))
            name = fp.read(nlen).decode("utf-8")
            arrays[name] = read_array(fp)
    return header, arrays


def model_header(model: SRNetwork, kind: str) -> dict:
    return {
        "kind": kind,
        "format": 1,
        "model": model.cfg.to_dict(),
        "dtype": _DTYPE_NAME[model.head.w.data.dtype],
    }


def save_weights(path: str | Path, model: SRNetwork):
    arrays = {f"model/{k}": v for k, v in model.export_arrays().items()}
    write_container(path, model_header(model, KIND_WEIGHTS), arrays)


def load_model(path: str | Path) -> SRNetwork:
    """Rebuild a model from any checkpoint kind (weights or train)."""
    header, arrays = read_container(path)
    if header.get("kind") not in (KIND_WEIGHTS, KIND_TRAIN):
        raise UsageError(f"{path}: unknown checkpoint kind {header.get('kind')!r}")
    cfg = ModelConfig.from_dict(header["model"])
    dtype = _NAME_DTYPE.get(header.get("dtype", "f32"))
    if dtype is None:
        raise UsageError(f"{path}: unknown dtype {header.get('dtype')!r}")
    model = build_model(cfg, seed=0, dtype=dtype)
    weights = {
        k[len("model/") :]: v for k, v in arrays.items() if k.startswith("model/")
    }
    model.load_arrays(weights)
    return model
