"""Binary checkpoint format.

Layout (all integers little-endian):

* magic ``b"SKGT"``, u32 format version
* u32 metadata count, then per item u32 key length + UTF-8 key, u32 value
  length + UTF-8 value
* u32 entry count, then per entry u32 name length + UTF-8 name, u32 rank,
  rank u64 dims, row-major float64 payload
* u8 optimizer flag; when set, u64 step then per entry (same order) the flat
  float64 first and second moments

Writing parameters in registry order makes same-seed runs byte-identical.
"""

import struct
from pathlib import Path

import numpy as np

from .errors import VersionMismatch
from .training import AdamState, ParameterStore

MAGIC = b"SKGT"
FORMAT_VERSION = 1


def _pack_str(text: str) -> bytes:
    raw = text.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


def _pack_array(values: np.ndarray) -> bytes:
    return np.ascontiguousarray(values, dtype="<f8").tobytes()


def save_checkpoint(
    path: Path,
    store: ParameterStore,
    metadata: dict,
    adam: AdamState | None = None,
) -> Path:
    path = Path(path)
    chunks = [MAGIC, struct.pack("<I", FORMAT_VERSION)]
    chunks.append(struct.pack("<I", len(metadata)))
    for key in sorted(metadata):
        chunks.append(_pack_str(key))
        chunks.append(_pack_str(str(metadata[key])))
    names = store.names()
    chunks.append(struct.pack("<I", len(names)))
    for name in names:
        data = store[name].data
        chunks.append(_pack_str(name))
        chunks.append(struct.pack("<I", data.ndim))
        chunks.append(struct.pack(f"<{data.ndim}Q", *data.shape))
        chunks.append(_pack_array(data))
    if adam is None:
        chunks.append(struct.pack("<B", 0))
    else:
        chunks.append(struct.pack("<B", 1))
        chunks.append(struct.pack("<Q", adam.step))
        for name in names:
            chunks.append(_pack_array(adam.m[name]))
            chunks.append(_pack_array(adam.v[name]))
    path.write_bytes(b"".join(chunks))
    return path


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, count: int) -> bytes:
        if self.pos + count > len(self.blob):
            raise VersionMismatch("checkpoint truncated")
        out = self.blob[self.pos : self.pos + count]
        self.pos += count
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]

    def u8(self) -> int:
        return struct.unpack("<B", self.take(1))[0]

    def text(self) -> str:
        return self.take(self.u32()).decode("utf-8")

    def array(self, count: int) -> np.ndarray:
        return np.frombuffer(self.take(count * 8), dtype="<f8").astype(np.float64)


class CheckpointData:
    """Parsed checkpoint: ordered entries, metadata, optional Adam state."""

    def __init__(self, entries, metadata, adam_step=None, adam_m=None, adam_v=None):
        self.entries = entries
        self.metadata = metadata
        self.adam_step = adam_step
        self.adam_m = adam_m
        self.adam_v = adam_v

    def restore_adam(self, lr: float) -> AdamState:
        state = AdamState(lr=lr, step=self.adam_step or 0)
        state.m = {k: v.copy() for k, v in (self.adam_m or {}).items()}
        state.v = {k: v.copy() for k, v in (self.adam_v or {}).items()}
        return state


def load_checkpoint(path: Path) -> CheckpointData:
    reader = _Reader(Path(path).read_bytes())
    if reader.take(4) != MAGIC:
        raise VersionMismatch(f"{path} is not a skelgait checkpoint")
    version = reader.u32()
    if version != FORMAT_VERSION:
        raise VersionMismatch(
            f"checkpoint format {version} unsupported (expected {FORMAT_VERSION})"
        )
    metadata = {}
    for _ in range(reader.u32()):
        key = reader.text()
        metadata[key] = reader.text()
    entries = {}
    for _ in range(reader.u32()):
        name = reader.text()
        rank = reader.u32()
        dims = tuple(reader.u64() for _ in range(rank))
        count = 1
        for d in dims:
            count *= d
        entries[name] = reader.array(count).reshape(dims)
    adam_step = None
    adam_m = None
    adam_v = None
    if reader.u8():
        adam_step = reader.u64()
        adam_m = {}
        adam_v = {}
        for name, values in entries.items():
            adam_m[name] = reader.array(values.size)
            adam_v[name] = reader.array(values.size)
    return CheckpointData(entries, metadata, adam_step, adam_m, adam_v)
