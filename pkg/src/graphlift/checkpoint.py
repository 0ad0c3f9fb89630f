"""Checkpoint serialization: a JSON manifest plus a flat binary blob.

A checkpoint at base path `ckpt` is the pair ckpt.json / ckpt.bin.  The
manifest records format_version, an arbitrary JSON config dict, and for
each parameter its shape and byte offset into the blob.  The blob holds
the parameter values as little-endian float64 in manifest order.
"""

from __future__ import annotations

import json
import os
from typing import Mapping

import numpy as np

from .errors import CheckpointFormatError
from .tensor import Tensor

__all__ = ["save_checkpoint", "load_checkpoint", "manifest_path", "blob_path"]

FORMAT_VERSION = 1


def manifest_path(base: str) -> str:
    return base + ".json"


def blob_path(base: str) -> str:
    return base + ".bin"


def save_checkpoint(base: str, params: Mapping[str, Tensor | np.ndarray],
                    config: dict | None = None) -> None:
    """Write params and a config dict to base.json + base.bin."""
    entries = {}
    chunks = []
    offset = 0
    for name, p in params.items():
        # asarray keeps 0-d shapes, where ascontiguousarray would promote to 1-d
        arr = np.asarray(p.data if isinstance(p, Tensor) else p,
                         dtype="<f8", order="C")
        entries[name] = {"shape": list(arr.shape), "dtype": "f64", "offset": offset}
        chunks.append(arr.tobytes())
        offset += arr.nbytes
    manifest = {
        "format_version": FORMAT_VERSION,
        "config": config or {},
        "params": entries,
    }
    dirname = os.path.dirname(os.path.abspath(base))
    os.makedirs(dirname, exist_ok=True)
    with open(manifest_path(base), "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    with open(blob_path(base), "wb") as f:
        f.write(b"".join(chunks))


def load_checkpoint(base: str) -> tuple[dict[str, np.ndarray], dict]:
    """Read base.json + base.bin; returns (name -> array, config)."""
    try:
        with open(manifest_path(base), "r", encoding="utf-8") as f:
            manifest = json.load(f)
    except FileNotFoundError:
        raise CheckpointFormatError(f"missing checkpoint manifest {manifest_path(base)}")
    except json.JSONDecodeError as e:
        raise CheckpointFormatError(f"unreadable checkpoint manifest: {e}")
    if not isinstance(manifest, dict) or manifest.get("format_version") != FORMAT_VERSION:
        raise CheckpointFormatError(
            f"unsupported checkpoint format_version {manifest.get('format_version')!r}"
        )
    entries = manifest.get("params")
    if not isinstance(entries, dict):
        raise CheckpointFormatError("checkpoint manifest has no params table")
    try:
        with open(blob_path(base), "rb") as f:
            blob = f.read()
    except FileNotFoundError:
        raise CheckpointFormatError(f"missing checkpoint blob {blob_path(base)}")

    out: dict[str, np.ndarray] = {}
    total = 0
    for name, meta in entries.items():
        if meta.get("dtype") != "f64":
            raise CheckpointFormatError(f"param {name!r} has unsupported dtype {meta.get('dtype')!r}")
        shape = tuple(meta.get("shape", ()))
        if not all(isinstance(n, int) and n >= 0 for n in shape):
            raise CheckpointFormatError(f"param {name!r} has a bad shape {shape}")
        offset = meta.get("offset")
        size = int(np.prod(shape, dtype=np.int64)) if shape else 1
        nbytes = size * 8
        if not isinstance(offset, int) or offset < 0 or offset + nbytes > len(blob):
            raise CheckpointFormatError(f"param {name!r} points outside the blob")
        arr = np.frombuffer(blob, dtype="<f8", count=size, offset=offset)
        arr = arr.astype(np.float64).reshape(shape)
        if not np.all(np.isfinite(arr)):
            raise CheckpointFormatError(f"param {name!r} contains non-finite values")
        out[name] = arr
        total += nbytes
    if total != len(blob):
        raise CheckpointFormatError(
            f"blob size {len(blob)} does not match manifest total {total}"
        )
    config = manifest.get("config", {})
    if not isinstance(config, dict):
        raise CheckpointFormatError("checkpoint config must be a JSON object")
    return out, config
