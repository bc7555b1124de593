"""Flatten nested parameter containers to ``name -> array`` and back."""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path

import numpy as np


def collect(obj, prefix: str = "", out: dict | None = None) -> dict[str, np.ndarray]:
    out = {} if out is None else out
    if isinstance(obj, np.ndarray):
        out[prefix] = obj
    elif dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        for f in dataclasses.fields(obj):
            collect(getattr(obj, f.name), f"{prefix}.{f.name}" if prefix else f.name, out)
    elif isinstance(obj, (list, tuple)):
        for i, item in enumerate(obj):
            collect(item, f"{prefix}.{i}" if prefix else str(i), out)
    elif isinstance(obj, dict):
        for k, item in obj.items():
            collect(item, f"{prefix}.{k}" if prefix else str(k), out)
    return out


def restore(obj, flat: dict[str, np.ndarray], prefix: str = ""):
    """Return a copy of ``obj`` with every array replaced by ``flat[name]``."""
    if isinstance(obj, np.ndarray):
        if prefix not in flat:
            raise KeyError(f"missing tensor {prefix!r}")
        value = np.asarray(flat[prefix], dtype=np.float64)
        if value.shape != obj.shape:
            raise ValueError(f"tensor {prefix!r} has shape {value.shape}, model expects {obj.shape}")
        return value
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        changes = {
            f.name: restore(getattr(obj, f.name), flat, f"{prefix}.{f.name}" if prefix else f.name)
            for f in dataclasses.fields(obj)
        }
        return dataclasses.replace(obj, **changes)
    if isinstance(obj, (list, tuple)):
        items = [restore(item, flat, f"{prefix}.{i}" if prefix else str(i)) for i, item in enumerate(obj)]
        return type(obj)(items)
    if isinstance(obj, dict):
        return {k: restore(v, flat, f"{prefix}.{k}" if prefix else str(k)) for k, v in obj.items()}
    return obj


def manifest_path(weights_path: str | Path) -> Path:
    return Path(weights_path).with_suffix(".json")


def save_weights(flat: dict[str, np.ndarray], path: str | Path) -> None:
    """Write a flat little-endian f64 blob plus a JSON manifest next to it."""
    path = Path(path)
    entries = []
    offset = 0
    with open(path, "wb") as fh:
        for name, arr in flat.items():
            data = np.ascontiguousarray(arr, dtype="<f8")
            fh.write(data.tobytes())
            entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
            offset += data.size
    manifest = {"dtype": "<f8", "count": offset, "tensors": entries}
    manifest_path(path).write_text(json.dumps(manifest, indent=1))


def load_weights(path: str | Path) -> dict[str, np.ndarray]:
    path = Path(path)
    manifest = json.loads(manifest_path(path).read_text())
    blob = np.fromfile(path, dtype="<f8")
    if blob.size != manifest["count"]:
        raise ValueError(f"{path}: expected {manifest['count']} values, found {blob.size}")
    flat = {}
    for entry in manifest["tensors"]:
        size = int(np.prod(entry["shape"], dtype=np.int64))
        start = entry["offset"]
        flat[entry["name"]] = blob[start : start + size].reshape(entry["shape"]).astype(np.float64)
    return flat
