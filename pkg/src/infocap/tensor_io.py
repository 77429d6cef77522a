"""Binary container for named float64 tensors.

Layout (all integers little-endian):

    magic    4 bytes  b"NDT1"
    meta     u32 length + UTF-8 JSON (arbitrary caller metadata)
    count    u32 number of entries
    entry*   u16 name length, name UTF-8, u8 rank, u64 per dim,
             row-major float64 payload

Used for feature files (streams ``VR``/``VF``/``VC``) and model
checkpoints (one entry per named parameter, manifest in the metadata).
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Mapping

import numpy as np

MAGIC = b"NDT1"

_MAX_RANK = 8


class TensorFileError(ValueError):
    """Raised when a tensor file is truncated, corrupt, or mistyped."""


def save_tensors(path: str | Path, arrays: Mapping[str, np.ndarray],
                 meta: Mapping | None = None) -> None:
    """Write named arrays to ``path``; keys are written in sorted order."""
    path = Path(path)
    meta_bytes = json.dumps(dict(meta or {}), sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(meta_bytes)))
        fh.write(meta_bytes)
        fh.write(struct.pack("<I", len(arrays)))
        for name in sorted(arrays):
            arr = np.asarray(arrays[name], dtype=np.float64)
            name_bytes = name.encode("utf-8")
            fh.write(struct.pack("<H", len(name_bytes)))
            fh.write(name_bytes)
            fh.write(struct.pack("<B", arr.ndim))
            for dim in arr.shape:
                fh.write(struct.pack("<Q", dim))
            fh.write(arr.astype("<f8").tobytes())


def load_tensors(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    """Read a tensor container; returns (arrays, metadata)."""
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] != MAGIC:
        raise TensorFileError(f"{path}: not a tensor file (bad magic)")
    pos = 4

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(raw):
            raise TensorFileError(f"{path}: truncated at byte {pos}")
        chunk = raw[pos:pos + n]
        pos += n
        return chunk

    meta_len = struct.unpack("<I", take(4))[0]
    meta = json.loads(take(meta_len).decode("utf-8")) if meta_len else {}
    count = struct.unpack("<I", take(4))[0]
    arrays: dict[str, np.ndarray] = {}
    for _ in range(count):
        name_len = struct.unpack("<H", take(2))[0]
        name = take(name_len).decode("utf-8")
        rank = struct.unpack("<B", take(1))[0]
        if rank > _MAX_RANK:
            raise TensorFileError(f"{path}: entry {name!r} has rank {rank}")
        shape = tuple(struct.unpack("<Q", take(8))[0] for _ in range(rank))
        n_items = int(np.prod(shape, dtype=np.int64)) if shape else 1
        data = np.frombuffer(take(n_items * 8), dtype="<f8").reshape(shape)
        arrays[name] = data.astype(np.float64).copy()
    if pos != len(raw):
        raise TensorFileError(f"{path}: {len(raw) - pos} trailing bytes")
    return arrays, meta
