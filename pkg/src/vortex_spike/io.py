"""Atomic file output, the binary field format and JSON helpers.

Field files are a 64-byte little-endian header followed by the array as
float64 in C order.  Header layout: magic (8 bytes), Nx and Ny (int64),
Lx and delta (float64), 24 bytes of zero padding.  Every field has a JSON
sidecar with the axes and the run's config hash.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

MAGIC = b"VSPKFLD1"
HEADER = struct.Struct("<8sqqdd24x")
assert HEADER.size == 64


def atomic_write_bytes(path, data: bytes):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def atomic_write_text(path, text: str):
    return atomic_write_bytes(path, text.encode("utf-8"))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if np.isfinite(x) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps(obj) -> str:
    """Deterministic JSON: sorted keys, non-finite floats as null."""
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def write_json(path, obj):
    return atomic_write_text(path, dumps(obj))


def read_json(path):
    return json.loads(Path(path).read_text())


def encode_field(arr, Lx: float, delta: float) -> bytes:
    a = np.asarray(arr, dtype="<f8")
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise ValueError("fields are one- or two-dimensional")
    nx, ny = a.shape
    return HEADER.pack(MAGIC, nx, ny, float(Lx), float(delta)) + np.ascontiguousarray(a).tobytes()


def decode_field(data: bytes):
    if len(data) < HEADER.size:
        raise ValueError("truncated field file")
    magic, nx, ny, Lx, delta = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ValueError("not a field file (bad magic)")
    body = np.frombuffer(data, dtype="<f8", offset=HEADER.size)
    if body.size != nx * ny:
        raise ValueError(f"field body has {body.size} values, header says {nx}x{ny}")
    return body.reshape(nx, ny).copy(), {"Nx": nx, "Ny": ny, "Lx": Lx, "delta": delta}


def write_field(path, arr, Lx: float, delta: float, manifest: dict):
    """Write ``path`` (binary) and ``path`` + '.json' (sidecar manifest)."""
    path = Path(path)
    atomic_write_bytes(path, encode_field(arr, Lx, delta))
    side = dict(manifest)
    side.update({"file": path.name, "shape": list(np.shape(arr)), "Lx": float(Lx), "delta": float(delta),
                 "dtype": "float64-le", "header_bytes": HEADER.size})
    write_json(path.with_name(path.name + ".json"), side)
    return path


def read_field(path):
    """(array, header, sidecar manifest or None)."""
    path = Path(path)
    arr, header = decode_field(path.read_bytes())
    side_path = path.with_name(path.name + ".json")
    side = read_json(side_path) if side_path.exists() else None
    if side is not None and len(side.get("shape", [])) == 1:
        arr = arr[:, 0]
    return arr, header, side
