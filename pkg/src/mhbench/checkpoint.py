"""Self-describing model checkpoints: magic, JSON header, opaque payload.

Layout: ``b"MHBCKPT1"`` | uint32 little-endian header length | UTF-8 JSON
header | payload bytes. The header is readable without unpickling anything.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path

MAGIC = b"MHBCKPT1"


def write_checkpoint(path: str | Path, header: dict, payload: bytes) -> Path:
    path = Path(path)
    raw = json.dumps(header, sort_keys=True).encode()
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    with os.fdopen(fd, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(raw)))
        fh.write(raw)
        fh.write(payload)
    os.replace(tmp, path)
    return path


def read_header(path: str | Path) -> dict:
    return read_checkpoint(path)[0]


def read_checkpoint(path: str | Path) -> tuple[dict, bytes]:
    blob = Path(path).read_bytes()
    if blob[:len(MAGIC)] != MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    (n,) = struct.unpack("<I", blob[len(MAGIC):len(MAGIC) + 4])
    start = len(MAGIC) + 4
    header = json.loads(blob[start:start + n].decode())
    return header, blob[start + n:]
