"""Binary checkpoint format (all integers and floats little-endian).

    magic      4 bytes  b"MKHN"
    version    u32      1
    config     u32 length + UTF-8 ``key = value`` text
    seed       i64
    records    u32 count, then per record:
               u32 name length, UTF-8 name, u32 rank, rank x u64 extents,
               prod(extents) float64 values in row-major order

Normalisation statistics are stored as the records ``norm.mean`` and
``norm.std``; every other record is a model parameter.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import RunConfig, parse_config_text
from .dataset import NormalizationStats

MAGIC = b"MKHN"
VERSION = 1


class CheckpointFormatError(ValueError):
    pass


@dataclass
class Checkpoint:
    config: RunConfig
    params: dict[str, np.ndarray]
    stats: NormalizationStats
    seed: int


def _write_record(buf, name: str, arr: np.ndarray) -> None:
    arr = np.ascontiguousarray(arr, dtype="<f8")
    nb = name.encode()
    buf.write(struct.pack("<I", len(nb)))
    buf.write(nb)
    buf.write(struct.pack("<I", arr.ndim))
    buf.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
    buf.write(arr.tobytes())


def to_bytes(ckpt: Checkpoint) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", VERSION))
    text = ckpt.config.to_text().encode()
    buf.write(struct.pack("<I", len(text)))
    buf.write(text)
    buf.write(struct.pack("<q", ckpt.seed))
    records = [("norm.mean", ckpt.stats.mean), ("norm.std", ckpt.stats.std)] + list(ckpt.params.items())
    buf.write(struct.pack("<I", len(records)))
    for name, arr in records:
        _write_record(buf, name, arr)
    return buf.getvalue()


def save(ckpt: Checkpoint, path: str | Path) -> None:
    Path(path).write_bytes(to_bytes(ckpt))


class _Reader:
    def __init__(self, data: bytes):
        self.data, self.pos = data, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointFormatError("truncated checkpoint")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def from_bytes(data: bytes) -> Checkpoint:
    r = _Reader(data)
    if r.take(4) != MAGIC:
        raise CheckpointFormatError("bad checkpoint magic (not an MKHN file)")
    (version,) = r.unpack("<I")
    if version != VERSION:
        raise CheckpointFormatError(f"unsupported checkpoint version {version}")
    (clen,) = r.unpack("<I")
    config = parse_config_text(r.take(clen).decode())
    (seed,) = r.unpack("<q")
    (count,) = r.unpack("<I")
    records: dict[str, np.ndarray] = {}
    for _ in range(count):
        (nlen,) = r.unpack("<I")
        name = r.take(nlen).decode()
        (rank,) = r.unpack("<I")
        shape = r.unpack(f"<{rank}Q") if rank else ()
        size = int(np.prod(shape)) if shape else 1
        records[name] = np.frombuffer(r.take(8 * size), dtype="<f8").reshape(shape).astype(np.float64)
    if r.pos != len(data):
        raise CheckpointFormatError("trailing bytes after checkpoint records")
    try:
        stats = NormalizationStats(records.pop("norm.mean"), records.pop("norm.std"))
    except KeyError:
        raise CheckpointFormatError("checkpoint lacks normalisation records") from None
    return Checkpoint(config, records, stats, seed)


def load(path: str | Path) -> Checkpoint:
    return from_bytes(Path(path).read_bytes())
