"""Binary checkpoint format shared by all modules.

Little-endian layout: magic "MSMT", u32 version, u32 record count, then per
record a u16 name length, the UTF-8 name, a u8 rank, rank u64 dims and the
row-major f32 payload.  Save -> load -> save round-trips bit-exactly.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"MSMT"
VERSION = 1


def save(path: str | Path, records: dict[str, np.ndarray]) -> None:
    chunks = [MAGIC, struct.pack("<II", VERSION, len(records))]
    for name, arr in records.items():
        encoded = name.encode("utf-8")
        if len(encoded) > 0xFFFF:
            raise ValueError(f"record name too long: {name!r}")
        arr = np.asarray(arr)
        if arr.ndim > 0xFF:
            raise ValueError(f"record rank {arr.ndim} exceeds format limit")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<B", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        chunks.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load(path: str | Path) -> dict[str, np.ndarray]:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise ValueError(f"{path} is not a checkpoint (bad magic)")
    version, count = struct.unpack_from("<II", raw, 4)
    if version != VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    offset = 12
    records: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", raw, offset)
        offset += 2
        name = raw[offset:offset + name_len].decode("utf-8")
        offset += name_len
        (rank,) = struct.unpack_from("<B", raw, offset)
        offset += 1
        dims = struct.unpack_from(f"<{rank}Q", raw, offset)
        offset += 8 * rank
        size = int(np.prod(dims)) if rank else 1
        payload = np.frombuffer(raw, dtype="<f4", count=size, offset=offset)
        offset += 4 * size
        if name in records:
            raise ValueError(f"duplicate record name {name!r}")
        records[name] = payload.reshape(dims).copy()
    if offset != len(raw):
        raise ValueError("trailing bytes after the last checkpoint record")
    return records
