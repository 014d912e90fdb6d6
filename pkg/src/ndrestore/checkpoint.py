"""Binary checkpoint container for named float32 tensors plus JSON metadata.

Layout (all integers little-endian):

    magic   4 bytes  b"NDRC"
    version u32      currently 1
    meta    u64 length + UTF-8 JSON (config echo, RNG state, step, averages)
    count   u64      number of tensor records
    record  u32 name length, UTF-8 name,
            u32 rank, rank x u64 dims,
            row-major float32 payload

Records are sorted by name and the metadata JSON is canonical
(sorted keys, no whitespace), so save -> load -> save is byte-identical.
"""

from __future__ import annotations

import json
import os
import struct

import numpy as np

MAGIC = b"NDRC"
VERSION = 1


def save_checkpoint(path, tensors, meta):
    """Atomically write named arrays (stored as float32) and metadata."""
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<I", VERSION)
    meta_bytes = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    blob += struct.pack("<Q", len(meta_bytes))
    blob += meta_bytes
    names = sorted(tensors)
    blob += struct.pack("<Q", len(names))
    for name in names:
        arr = np.ascontiguousarray(tensors[name], dtype="<f4")
        nb = name.encode("utf-8")
        blob += struct.pack("<I", len(nb))
        blob += nb
        blob += struct.pack("<I", arr.ndim)
        for dim in arr.shape:
            blob += struct.pack("<Q", dim)
        blob += arr.tobytes()
    tmp = path + ".tmp"
    with open(tmp, "wb") as f:
        f.write(blob)
    os.replace(tmp, path)


def load_checkpoint(path):
    """Read a checkpoint; returns (tensors, meta)."""
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != MAGIC:
        raise ValueError(f"incompatible checkpoint {path}: bad magic {blob[:4]!r}")
    off = 4
    (version,) = struct.unpack_from("<I", blob, off)
    off += 4
    if version != VERSION:
        raise ValueError(f"incompatible checkpoint {path}: version {version}, expected {VERSION}")
    (meta_len,) = struct.unpack_from("<Q", blob, off)
    off += 8
    meta = json.loads(blob[off:off + meta_len].decode("utf-8"))
    off += meta_len
    (count,) = struct.unpack_from("<Q", blob, off)
    off += 8
    tensors = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<I", blob, off)
        off += 4
        name = blob[off:off + name_len].decode("utf-8")
        off += name_len
        (rank,) = struct.unpack_from("<I", blob, off)
        off += 4
        dims = struct.unpack_from(f"<{rank}Q", blob, off)
        off += 8 * rank
        size = int(np.prod(dims, dtype=np.int64)) if rank else 1
        arr = np.frombuffer(blob, dtype="<f4", count=size, offset=off).reshape(dims)
        off += 4 * size
        tensors[name] = arr.copy()
    if off != len(blob):
        raise ValueError(f"incompatible checkpoint {path}: {len(blob) - off} trailing bytes")
    return tensors, meta


def load_into(params, tensors, prefix):
    """Copy checkpoint records into a name -> Tensor dict, checking shapes."""
    for name, t in params.items():
        key = f"{prefix}/{name}" if prefix else name
        if key not in tensors:
            raise KeyError(f"checkpoint is missing tensor {key!r}")
        arr = tensors[key]
        if tuple(arr.shape) != tuple(t.data.shape):
            raise ValueError(f"shape mismatch for {key!r}: checkpoint {arr.shape}, model {t.data.shape}")
        t.data = arr.astype(t.data.dtype)
