"""Versioned binary checkpoint of named parameter tensors.

Layout, all little-endian: 4-byte magic "AMOC", uint32 format version,
uint32 tensor count; then per tensor a uint32 name length, the UTF-8 name
bytes, uint32 rank, the extents as uint32s, and the row-major float32
data. Values round-trip bit-exactly for float32 parameters.
"""

from __future__ import annotations

import numpy as np

__all__ = ["MAGIC", "FORMAT_VERSION", "save_checkpoint", "load_checkpoint"]

MAGIC = b"AMOC"
FORMAT_VERSION = 1


def save_checkpoint(path, tensors: dict):
    """Write a name -> array mapping; insertion order is preserved."""
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(np.array([FORMAT_VERSION, len(tensors)], dtype="<u4").tobytes())
        for name, arr in tensors.items():
            data = np.asarray(arr, dtype="<f4")  # asarray keeps rank-0 tensors rank 0
            if not data.flags.c_contiguous:
                data = np.ascontiguousarray(data)
            encoded = name.encode("utf-8")
            f.write(np.array([len(encoded)], dtype="<u4").tobytes())
            f.write(encoded)
            f.write(np.array([data.ndim], dtype="<u4").tobytes())
            f.write(np.array(data.shape, dtype="<u4").tobytes())
            f.write(data.tobytes())


class _Reader:
    def __init__(self, raw, path):
        self.raw = raw
        self.pos = 0
        self.path = path

    def take(self, n):
        if self.pos + n > len(self.raw):
            raise ValueError(
                f"{self.path}: truncated checkpoint, needed {n} bytes at offset {self.pos}"
            )
        out = self.raw[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self):
        return int(np.frombuffer(self.take(4), dtype="<u4")[0])

    def u32_list(self, count):
        return [int(v) for v in np.frombuffer(self.take(4 * count), dtype="<u4")]


def load_checkpoint(path) -> dict:
    """Read a checkpoint into a name -> float32 array mapping."""
    with open(path, "rb") as f:
        raw = f.read()
    r = _Reader(raw, path)
    if r.take(4) != MAGIC:
        raise ValueError(f"{path}: bad checkpoint magic")
    version = r.u32()
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    count = r.u32()
    out = {}
    for _ in range(count):
        name = r.take(r.u32()).decode("utf-8")
        rank = r.u32()
        shape = tuple(r.u32_list(rank)) if rank else ()
        size = int(np.prod(shape)) if shape else 1
        data = np.frombuffer(r.take(4 * size), dtype="<f4")
        out[name] = data.reshape(shape).copy()
    return out
