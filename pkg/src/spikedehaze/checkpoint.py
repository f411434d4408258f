"""Bit-exact binary checkpoint archive.

Layout (little-endian throughout):
  magic "DSNN" | version u32 | tensor count u32 | records...
  record: name length u32 | name bytes (dotted path) | rank u32 |
          extents u32 each | dtype tag u8 (0 = float32) | raw scalar data
An optional optimizer-state section follows: marker byte 0x01, then a
count u32 and records in the same format.
"""

from __future__ import annotations

import struct

import numpy as np

__all__ = ["CheckpointError", "save_checkpoint", "load_checkpoint",
           "MAGIC", "VERSION"]

MAGIC = b"DSNN"
VERSION = 1
DTYPE_F32 = 0
OPT_SECTION_MARKER = 0x01


class CheckpointError(RuntimeError):
    pass


def _write_record(out: list[bytes], name: str, arr: np.ndarray):
    # note: ascontiguousarray would promote rank-0 arrays to rank 1
    data = np.asarray(arr, dtype="<f4", order="C")
    name_b = name.encode("utf-8")
    out.append(struct.pack("<I", len(name_b)))
    out.append(name_b)
    out.append(struct.pack("<I", data.ndim))
    out.append(struct.pack(f"<{data.ndim}I", *data.shape))
    out.append(struct.pack("<B", DTYPE_F32))
    out.append(data.tobytes())


def save_checkpoint(path, tensors: dict[str, np.ndarray],
                    optimizer_state: dict[str, np.ndarray] | None = None):
    """Write named arrays (and optionally optimizer state) to ``path``."""
    chunks: list[bytes] = [MAGIC, struct.pack("<II", VERSION, len(tensors))]
    for name, arr in tensors.items():
        _write_record(chunks, name, np.asarray(arr))
    if optimizer_state is not None:
        chunks.append(struct.pack("<B", OPT_SECTION_MARKER))
        chunks.append(struct.pack("<I", len(optimizer_state)))
        for name, arr in optimizer_state.items():
            _write_record(chunks, name, np.asarray(arr))
    with open(path, "wb") as f:
        f.write(b"".join(chunks))


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise CheckpointError("truncated checkpoint")
        chunk = self.blob[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u8(self) -> int:
        return struct.unpack("<B", self.take(1))[0]

    def exhausted(self) -> bool:
        return self.pos == len(self.blob)


def _read_records(r: _Reader, count: int) -> dict[str, np.ndarray]:
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        name = r.take(r.u32()).decode("utf-8")
        rank = r.u32()
        shape = tuple(r.u32() for _ in range(rank))
        tag = r.u8()
        if tag != DTYPE_F32:
            raise CheckpointError(f"unsupported dtype tag {tag}")
        n = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(r.take(4 * n), dtype="<f4").reshape(shape)
        out[name] = arr.copy()
    return out


def load_checkpoint(path):
    """Return (tensors, optimizer_state_or_None)."""
    with open(path, "rb") as f:
        blob = f.read()
    r = _Reader(blob)
    if r.take(4) != MAGIC:
        raise CheckpointError("bad checkpoint magic")
    version = r.u32()
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    tensors = _read_records(r, r.u32())
    opt_state = None
    if not r.exhausted():
        if r.u8() != OPT_SECTION_MARKER:
            raise CheckpointError("unknown trailing section marker")
        opt_state = _read_records(r, r.u32())
        if not r.exhausted():
            raise CheckpointError("trailing bytes after optimizer section")
    return tensors, opt_state
