"""Binary token shards.

Layout (little-endian)::

    magic    8 bytes  b"AOTSHRD1"
    vocab    u32      vocabulary size V
    length   u32      tokens per sentence n
    count    u64      number of sentences
    tokens   u16 * n * count, row-major

The vocabulary lives in a text sidecar next to the shard (``<shard>.vocab``).
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidArgumentError
from .langgen import Vocab

MAGIC = b"AOTSHRD1"
_HEADER = struct.Struct("<8sIIQ")


@dataclass(frozen=True)
class ShardHeader:
    vocab_size: int
    length: int
    count: int


def vocab_path(shard_path) -> Path:
    p = Path(shard_path)
    return p.with_name(p.name + ".vocab")


def write_shard(path, sentences, vocab: Vocab) -> ShardHeader:
    arr = np.asarray(sentences)
    if arr.ndim != 2:
        raise InvalidArgumentError("shard payload must be 2-D (count, length)")
    if arr.size and (arr.min() < 0 or arr.max() >= len(vocab)):
        raise InvalidArgumentError("token id outside the vocabulary")
    if len(vocab) > 1 << 16:
        raise InvalidArgumentError("vocabulary too large for 16-bit token ids")
    header = ShardHeader(len(vocab), arr.shape[1], arr.shape[0])
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, header.vocab_size, header.length, header.count))
        fh.write(arr.astype("<u2").tobytes())
    vocab_path(path).write_text(vocab.to_text(), encoding="utf-8")
    return header


def read_shard(path) -> tuple[np.ndarray, Vocab]:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise InvalidArgumentError(f"{path}: truncated header")
    magic, vsize, length, count = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise InvalidArgumentError(f"{path}: bad magic {magic!r}")
    expected = _HEADER.size + 2 * length * count
    if len(raw) != expected:
        raise InvalidArgumentError(f"{path}: expected {expected} bytes, found {len(raw)}")
    body = np.frombuffer(raw, dtype="<u2", offset=_HEADER.size)
    vocab = Vocab.from_text(vocab_path(path).read_text(encoding="utf-8"))
    if len(vocab) != vsize:
        raise InvalidArgumentError(f"{path}: sidecar vocab has {len(vocab)} tokens, header says {vsize}")
    return body.reshape(count, length).astype(np.int64), vocab


def checksum(sentences) -> str:
    return hashlib.sha256(np.ascontiguousarray(sentences, dtype="<u2").tobytes()).hexdigest()
