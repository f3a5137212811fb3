"""Single-file parameter checkpoints.

Layout (little-endian)::

    b"AOTCKPT1"
    u32 len, config JSON (utf-8)
    u32 tensor count
    per tensor: u16 name len, name, u8 dtype code, u8 ndim, u32 * ndim dims, raw values
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
import torch

from ..errors import InvalidArgumentError
from .model import Transformer, TransformerConfig

MAGIC = b"AOTCKPT1"
_CODES = {"float32": (0, "<f4"), "float64": (1, "<f8")}
_BY_CODE = {code: (name, np_dt) for name, (code, np_dt) in _CODES.items()}


def save_checkpoint(model: Transformer, path, extra: dict | None = None):
    meta = {"config": model.cfg.to_dict(), "extra": extra or {}}
    blob = json.dumps(meta, sort_keys=True).encode()
    parts = [MAGIC, struct.pack("<I", len(blob)), blob]
    state = model.state_dict()
    parts.append(struct.pack("<I", len(state)))
    for name, t in state.items():
        dt_name = str(t.dtype).replace("torch.", "")
        code, np_dt = _CODES[dt_name]
        raw = t.detach().cpu().numpy().astype(np_dt).tobytes()
        enc = name.encode()
        parts += [struct.pack("<H", len(enc)), enc, struct.pack("<BB", code, t.dim()),
                  struct.pack(f"<{t.dim()}I", *t.shape), raw]
    Path(path).write_bytes(b"".join(parts))


def load_checkpoint(path) -> tuple[Transformer, dict]:
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise InvalidArgumentError(f"{path}: not a checkpoint")
    off = 8
    (n,) = struct.unpack_from("<I", raw, off)
    off += 4
    meta = json.loads(raw[off:off + n])
    off += n
    cfg = TransformerConfig(**meta["config"])
    model = Transformer(cfg)
    (count,) = struct.unpack_from("<I", raw, off)
    off += 4
    state = {}
    for _ in range(count):
        (ln,) = struct.unpack_from("<H", raw, off)
        off += 2
        name = raw[off:off + ln].decode()
        off += ln
        code, ndim = struct.unpack_from("<BB", raw, off)
        off += 2
        shape = struct.unpack_from(f"<{ndim}I", raw, off)
        off += 4 * ndim
        _, np_dt = _BY_CODE[code]
        size = int(np.prod(shape, dtype=np.int64)) * np.dtype(np_dt).itemsize
        arr = np.frombuffer(raw, dtype=np_dt, count=size // np.dtype(np_dt).itemsize, offset=off)
        off += size
        state[name] = torch.from_numpy(arr.reshape(shape).copy())
    model.load_state_dict(state)
    return model, meta.get("extra", {})
