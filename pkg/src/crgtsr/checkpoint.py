"""Binary checkpoints: named float32 tensors plus optional optimizer state.

Layout (little endian):
  magic "CRGTSR-CKPT", u32 format version, u16 hash length + ascii config
  hash, u64 store version, u32 tensor count, then per tensor: u16 name
  length + utf8 name, u8 ndim, u32 dims, float32 values. A trailing u8
  flags optimizer state; when set, u64 step count and a second tensor
  block follow.

Files are written to a temp path and atomically renamed, and tensors are
sorted by name, so save -> load -> save is byte-identical.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field

import numpy as np

__all__ = ["CheckpointData", "save_checkpoint", "load_checkpoint", "CheckpointError", "MAGIC"]

MAGIC = b"CRGTSR-CKPT"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class CheckpointData:
    params: dict
    config_hash: str
    store_version: int = 0
    optimizer_step: int | None = None
    optimizer_arrays: dict = field(default_factory=dict)

    @property
    def has_optimizer(self) -> bool:
        return self.optimizer_step is not None


def _write_tensor_block(fh, arrays: dict) -> None:
    fh.write(struct.pack("<I", len(arrays)))
    for name in sorted(arrays):
        arr = np.asarray(arrays[name], dtype="<f4")
        encoded = name.encode()
        fh.write(struct.pack("<H", len(encoded)))
        fh.write(encoded)
        fh.write(struct.pack("<B", arr.ndim))
        for dim in arr.shape:
            fh.write(struct.pack("<I", dim))
        fh.write(arr.tobytes(order="C"))


class _Reader:
    def __init__(self, blob: bytes, path):
        self.blob = blob
        self.off = 0
        self.path = path

    def take(self, n: int, what: str) -> bytes:
        if self.off + n > len(self.blob):
            raise CheckpointError(f"{self.path}: truncated checkpoint while reading {what}")
        out = self.blob[self.off:self.off + n]
        self.off += n
        return out

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def _read_tensor_block(reader: _Reader) -> dict:
    (count,) = reader.unpack("<I", "tensor count")
    out: dict = {}
    for _ in range(count):
        (name_len,) = reader.unpack("<H", "tensor name length")
        name = reader.take(name_len, "tensor name").decode()
        (ndim,) = reader.unpack("<B", f"tensor {name!r} rank")
        shape = tuple(reader.unpack("<" + "I" * ndim, f"tensor {name!r} shape")) if ndim else ()
        n_values = 1
        for dim in shape:
            n_values *= dim
        raw = reader.take(4 * n_values, f"tensor {name!r} values")
        out[name] = np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float64)
    return out


def save_checkpoint(path, params: dict, config_hash: str, store_version: int = 0,
                    optimizer_step: int | None = None, optimizer_arrays: dict | None = None) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        encoded_hash = config_hash.encode()
        fh.write(struct.pack("<H", len(encoded_hash)))
        fh.write(encoded_hash)
        fh.write(struct.pack("<Q", store_version))
        _write_tensor_block(fh, params)
        if optimizer_step is None:
            fh.write(struct.pack("<B", 0))
        else:
            fh.write(struct.pack("<B", 1))
            fh.write(struct.pack("<Q", optimizer_step))
            _write_tensor_block(fh, optimizer_arrays or {})
    os.replace(tmp, path)


def load_checkpoint(path) -> CheckpointData:
    with open(path, "rb") as fh:
        blob = fh.read()
    if not blob.startswith(MAGIC):
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    reader = _Reader(blob, path)
    reader.take(len(MAGIC), "magic")
    (version,) = reader.unpack("<I", "format version")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    (hash_len,) = reader.unpack("<H", "config hash length")
    config_hash = reader.take(hash_len, "config hash").decode()
    (store_version,) = reader.unpack("<Q", "store version")
    params = _read_tensor_block(reader)
    (opt_flag,) = reader.unpack("<B", "optimizer flag")
    optimizer_step = None
    optimizer_arrays: dict = {}
    if opt_flag:
        (optimizer_step,) = reader.unpack("<Q", "optimizer step")
        optimizer_arrays = _read_tensor_block(reader)
    if reader.off != len(blob):
        raise CheckpointError(f"{path}: {len(blob) - reader.off} trailing bytes")
    return CheckpointData(params, config_hash, store_version, optimizer_step, optimizer_arrays)
