"""``DFXCKPT1`` parameter container.

Layout: 8-byte magic, little-endian uint32 header length, UTF-8 JSON header,
then the concatenated little-endian float32 payload. The header lists each
parameter's name, shape, frozen flag, byte offset and SHA-256, plus a digest
of the whole payload.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path
from typing import Sequence

import numpy as np

from ..errors import CheckpointError
from .tensor import Parameter

MAGIC = b"DFXCKPT1"


def dumps(params: Sequence[Parameter], meta: dict | None = None) -> bytes:
    entries = []
    chunks = []
    offset = 0
    for p in params:
        raw = np.ascontiguousarray(p.data, dtype="<f4").tobytes()
        entries.append(
            {
                "name": p.name,
                "shape": list(p.shape),
                "frozen": bool(p.frozen),
                "offset": offset,
                "nbytes": len(raw),
                "sha256": hashlib.sha256(raw).hexdigest(),
            }
        )
        chunks.append(raw)
        offset += len(raw)
    payload = b"".join(chunks)
    header = {
        "format": "DFXCKPT1",
        "dtype": "<f4",
        "params": entries,
        "digest": hashlib.sha256(payload).hexdigest(),
        "meta": meta or {},
    }
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return MAGIC + struct.pack("<I", len(hbytes)) + hbytes + payload


def loads(blob: bytes) -> tuple[list[Parameter], dict]:
    """Returns (parameters, header). Raises CheckpointError on any corruption."""
    if blob[:8] != MAGIC:
        raise CheckpointError("not a DFXCKPT1 checkpoint")
    try:
        (hlen,) = struct.unpack("<I", blob[8:12])
        header = json.loads(blob[12:12 + hlen].decode("utf-8"))
    except (struct.error, UnicodeDecodeError, ValueError) as exc:
        raise CheckpointError(f"unreadable checkpoint header: {exc}") from None
    payload = blob[12 + hlen:]
    if hashlib.sha256(payload).hexdigest() != header["digest"]:
        raise CheckpointError("payload digest mismatch")
    params = []
    for e in header["params"]:
        raw = payload[e["offset"]:e["offset"] + e["nbytes"]]
        arr = np.frombuffer(raw, dtype="<f4").astype(np.float32).reshape(e["shape"])
        params.append(Parameter(arr, name=e["name"], frozen=e["frozen"]))
    return params, header


def save(path: str | Path, params: Sequence[Parameter], meta: dict | None = None) -> str:
    """Write a checkpoint; returns its payload digest."""
    blob = dumps(params, meta)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(blob)
    (hlen,) = struct.unpack("<I", blob[8:12])
    return json.loads(blob[12:12 + hlen])["digest"]


def load(path: str | Path) -> tuple[list[Parameter], dict]:
    return loads(Path(path).read_bytes())


def restore_into(params: Sequence[Parameter], loaded: Sequence[Parameter]) -> None:
    """Copy values and frozen flags from ``loaded`` into ``params`` by name."""
    by_name = {p.name: p for p in loaded}
    for p in params:
        src = by_name.get(p.name)
        if src is None or src.shape != p.shape:
            raise CheckpointError(f"checkpoint lacks a matching entry for {p.name} {p.shape}")
        p.data[...] = src.data
        if src.frozen:
            p.freeze()
        else:
            p.unfreeze()
