"""Versioned binary checkpoints.

Layout: magic "MSPN", u32 format version, u32 header length, UTF-8 JSON
header (model config, vocabulary, metadata, tensor manifest with
name/shape/element-offset), raw little-endian float32 blob, trailing
CRC32 over all preceding bytes. All integers little-endian.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..config import ModelConfig
from ..encoders import Vocabulary
from ..numerics import Tensor

MAGIC = b"MSPN"
FORMAT_VERSION = 1


class CheckpointError(Exception):
    pass


class CheckpointFormatError(CheckpointError):
    """Not a checkpoint file at all."""


class CheckpointVersionError(CheckpointError):
    """Format version newer than this reader supports."""


class CheckpointCorruptError(CheckpointError):
    """Truncation or checksum failure."""


@dataclass
class Checkpoint:
    config: ModelConfig
    params: dict  # flat {dotted.name: Tensor}, float32
    vocab: Vocabulary
    meta: dict
    version: int = FORMAT_VERSION


def save_checkpoint(path, params: dict, config: ModelConfig, vocab: Vocabulary,
                    meta: dict | None = None):
    """Write a checkpoint from flat float params (float64 is downcast)."""
    manifest = []
    chunks = []
    offset = 0
    for name, p in params.items():
        arr = np.ascontiguousarray(p.data, dtype="<f4")
        manifest.append({"name": name, "shape": list(arr.shape), "offset": offset})
        chunks.append(arr.tobytes())
        offset += arr.size
    header = json.dumps({
        "config": config.to_dict(),
        "vocab": vocab.to_dict(),
        "meta": meta or {},
        "tensors": manifest,
    }).encode("utf-8")
    body = MAGIC + struct.pack("<I", FORMAT_VERSION) + struct.pack("<I", len(header)) \
        + header + b"".join(chunks)
    crc = zlib.crc32(body) & 0xFFFFFFFF
    Path(path).write_bytes(body + struct.pack("<I", crc))


def load_checkpoint(path) -> Checkpoint:
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[:4] != MAGIC:
        raise CheckpointFormatError(f"{path}: not a checkpoint file (bad magic)")
    version = struct.unpack("<I", raw[4:8])[0]
    if version > FORMAT_VERSION:
        raise CheckpointVersionError(
            f"{path}: format version {version} is newer than supported {FORMAT_VERSION}")
    if len(raw) < 16:
        raise CheckpointCorruptError(f"{path}: truncated checkpoint")
    stored_crc = struct.unpack("<I", raw[-4:])[0]
    if zlib.crc32(raw[:-4]) & 0xFFFFFFFF != stored_crc:
        raise CheckpointCorruptError(f"{path}: checksum mismatch")
    header_len = struct.unpack("<I", raw[8:12])[0]
    header_end = 12 + header_len
    if header_end > len(raw) - 4:
        raise CheckpointCorruptError(f"{path}: truncated header")
    try:
        header = json.loads(raw[12:header_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointCorruptError(f"{path}: unreadable header: {e}") from None

    blob = np.frombuffer(raw[header_end:-4], dtype="<f4")
    params = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        size = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        if start + size > blob.size:
            raise CheckpointCorruptError(f"{path}: tensor {entry['name']!r} exceeds blob")
        arr = blob[start:start + size].reshape(shape).copy()
        params[entry["name"]] = Tensor(arr, requires_grad=True)
    return Checkpoint(
        config=ModelConfig.from_dict(header["config"]),
        params=params,
        vocab=Vocabulary(header["vocab"]),
        meta=header.get("meta", {}),
        version=version,
    )


def checkpoint_id(path) -> str:
    """Short content id for health reporting: the checkpoint's body CRC.

    The whole-file CRC would be the same constant for every valid file
    (appending a CRC to its own message leaves a fixed residue), so the
    id hashes everything before the trailer."""
    raw = Path(path).read_bytes()
    return f"{zlib.crc32(raw[:-4]) & 0xFFFFFFFF:08x}"
