"""Versioned binary checkpoint container.

Layout: an 8-byte magic, a little-endian uint64 header length, a UTF-8
JSON header, then the raw tensor bytes in header order. Tensors are
written little-endian; the header records name, shape and dtype for each
so loading can validate every shape against the stored config. The same
container holds both generator and classifier checkpoints (the `kind`
field tells them apart) and optionally embeds the vocabulary.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .corpus import Vocab
from .errors import CheckpointError

MAGIC = b"ECMCKPT\x01"
VERSION = 1
_DTYPES = {"f32": "<f4", "f64": "<f8"}


def save_checkpoint(path, kind: str, config: dict, tensors: dict[str, np.ndarray],
                    vocab: Vocab | None = None, extra: dict | None = None) -> None:
    entries = []
    blobs = []
    for name, arr in tensors.items():
        if arr.dtype == np.float32:
            tag = "f32"
        elif arr.dtype == np.float64:
            tag = "f64"
        else:
            raise CheckpointError(f"tensor {name}: unsupported dtype {arr.dtype}")
        blob = np.ascontiguousarray(arr).astype(_DTYPES[tag]).tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "dtype": tag,
                        "nbytes": len(blob)})
        blobs.append(blob)
    header = {
        "version": VERSION,
        "kind": kind,
        "config": config,
        "tensors": entries,
        "vocab": {"tokens": vocab.tokens, "tags": vocab.tags} if vocab else None,
        "extra": extra or {},
    }
    header_bytes = json.dumps(header, ensure_ascii=True, sort_keys=True,
                              separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<Q", len(header_bytes)))
        f.write(header_bytes)
        for blob in blobs:
            f.write(blob)


def load_checkpoint(path):
    """Returns (kind, config dict, tensors dict, vocab or None, extra dict)."""
    raw = Path(path).read_bytes()
    if len(raw) < len(MAGIC) + 8 or raw[:len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    (header_len,) = struct.unpack_from("<Q", raw, len(MAGIC))
    start = len(MAGIC) + 8
    try:
        header = json.loads(raw[start:start + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{path}: corrupt header ({e})") from e
    if header.get("version") != VERSION:
        raise CheckpointError(f"{path}: unsupported version {header.get('version')}")
    offset = start + header_len
    tensors: dict[str, np.ndarray] = {}
    for entry in header["tensors"]:
        nbytes = entry["nbytes"]
        blob = raw[offset:offset + nbytes]
        if len(blob) != nbytes:
            raise CheckpointError(f"{path}: truncated tensor {entry['name']}")
        arr = np.frombuffer(blob, dtype=_DTYPES[entry["dtype"]]).reshape(entry["shape"])
        tensors[entry["name"]] = arr.copy()
        offset += nbytes
    vocab = None
    if header.get("vocab"):
        vocab = Vocab(tokens=list(header["vocab"]["tokens"]),
                      tags=list(header["vocab"]["tags"]))
    return header["kind"], header["config"], tensors, vocab, header.get("extra", {})
