"""Binary checkpoint format.

Layout, little-endian throughout::

    b"MMGN" | u16 version | u32 header length | header JSON (UTF-8)
    | f32 tensors in header order | u32 CRC-32 of everything before it

The header carries the vocabulary, dimensions, the tensor table (name and
shape, in declared module order) and free-form metadata such as the
dataset statistics, config hash and seeds.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"MMGN"
VERSION = 1
_PREFIX = struct.Struct("<4sHI")
_CRC = struct.Struct("<I")


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    params: dict[str, np.ndarray]
    vocab: list[str]
    feature_dim: int
    property_dim: int
    meta: dict = field(default_factory=dict)


def to_bytes(ckpt: Checkpoint) -> bytes:
    table = [[name, list(v.shape)] for name, v in ckpt.params.items()]
    header = {"vocab": ckpt.vocab, "feature_dim": ckpt.feature_dim,
              "property_dim": ckpt.property_dim, "tensors": table, "meta": ckpt.meta}
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    body = b"".join(np.ascontiguousarray(v, dtype="<f4").tobytes() for v in ckpt.params.values())
    payload = _PREFIX.pack(MAGIC, VERSION, len(hbytes)) + hbytes + body
    return payload + _CRC.pack(zlib.crc32(payload))


def from_bytes(data: bytes) -> Checkpoint:
    if len(data) < _PREFIX.size + _CRC.size:
        raise CheckpointError("truncated checkpoint")
    magic, version, hlen = _PREFIX.unpack_from(data)
    if magic != MAGIC:
        raise CheckpointError("not a checkpoint (bad magic)")
    if version != VERSION:
        raise CheckpointError(f"unsupported version {version} (expected {VERSION})")
    payload, (crc,) = data[:-_CRC.size], _CRC.unpack(data[-_CRC.size:])
    if zlib.crc32(payload) != crc:
        raise CheckpointError("CRC mismatch: checkpoint is corrupted or truncated")
    start = _PREFIX.size
    try:
        header = json.loads(payload[start:start + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"unreadable header: {exc}") from exc
    pos = start + hlen
    params = {}
    for name, shape in header["tensors"]:
        n = int(np.prod(shape, dtype=np.int64))
        end = pos + 4 * n
        if end > len(payload):
            raise CheckpointError(f"tensor {name} runs past the end of the file")
        params[name] = np.frombuffer(payload[pos:end], dtype="<f4").reshape(shape).astype(np.float64)
        pos = end
    if pos != len(payload):
        raise CheckpointError(f"{len(payload) - pos} trailing bytes after the tensor table")
    return Checkpoint(params, header["vocab"], header["feature_dim"], header["property_dim"],
                      header.get("meta", {}))


def save(path, ckpt: Checkpoint) -> None:
    Path(path).write_bytes(to_bytes(ckpt))


def load(path) -> Checkpoint:
    return from_bytes(Path(path).read_bytes())


def read_header(path) -> dict:
    """Header summary of a CRC-validated checkpoint."""
    data = Path(path).read_bytes()
    ck = from_bytes(data)
    return {"version": VERSION, "vocab": ck.vocab, "feature_dim": ck.feature_dim,
            "property_dim": ck.property_dim,
            "tensors": [[n, list(v.shape)] for n, v in ck.params.items()],
            "n_parameters": int(sum(v.size for v in ck.params.values())),
            "meta": ck.meta, "bytes": len(data), "crc_ok": True}
