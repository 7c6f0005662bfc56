"""Flat binary serialization for named float64 tensors.

Layout: magic ``MILW``, version u32, then for each tensor
(name length u32, UTF-8 name, rank u32, dims as u64, row-major f64 values).
All integers and floats are little-endian. Tensors are read until EOF, so no
count field is needed; insertion order is preserved on round trip.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"MILW"
VERSION = 1


def save_tensors(path, tensors: dict[str, np.ndarray]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        for name, value in tensors.items():
            arr = np.ascontiguousarray(value, dtype="<f8")
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<I", arr.ndim))
            if arr.ndim:
                fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            fh.write(arr.tobytes())


def load_tensors(path) -> dict[str, np.ndarray]:
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise ValueError(f"{path}: bad magic, expected {MAGIC!r}")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    offset = 8
    tensors: dict[str, np.ndarray] = {}
    while offset < len(data):
        (name_len,) = struct.unpack_from("<I", data, offset)
        offset += 4
        name = data[offset : offset + name_len].decode("utf-8")
        offset += name_len
        (rank,) = struct.unpack_from("<I", data, offset)
        offset += 4
        shape = struct.unpack_from(f"<{rank}Q", data, offset) if rank else ()
        offset += 8 * rank
        count = int(np.prod(shape, dtype=np.int64)) if rank else 1
        values = np.frombuffer(data, dtype="<f8", count=count, offset=offset)
        offset += 8 * count
        tensors[name] = values.reshape(shape).astype(np.float64)
    return tensors


def save_features(path, features: np.ndarray) -> None:
    """Serialize an instance-feature matrix under the conventional name ``V``."""
    save_tensors(path, {"V": np.asarray(features, dtype=np.float64)})


def load_features(path) -> np.ndarray:
    tensors = load_tensors(path)
    if "V" not in tensors:
        raise ValueError(f"{path}: no tensor named 'V'")
    return tensors["V"]
