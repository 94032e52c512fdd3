"""Versioned binary checkpoints and atomic file writes.

Container layout: 8-byte magic, little-endian uint32 format version,
uint32 header length, UTF-8 JSON header, then an ``.npz`` body holding
the named arrays.
"""
from __future__ import annotations

import io
import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np


class FormatError(ValueError):
    pass


def atomic_write(path, data: bytes | str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode()
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def pack_container(magic: bytes, version: int, header: dict, arrays: dict[str, np.ndarray]) -> bytes:
    head = json.dumps(header, sort_keys=True).encode()
    body = io.BytesIO()
    np.savez(body, **arrays)
    return magic + struct.pack("<II", version, len(head)) + head + body.getvalue()


def unpack_container(blob: bytes, magic: bytes, version: int) -> tuple[dict, dict[str, np.ndarray]]:
    if blob[:len(magic)] != magic:
        raise FormatError("not a checkpoint of the expected kind")
    off = len(magic)
    got, hlen = struct.unpack("<II", blob[off:off + 8])
    if got != version:
        raise FormatError(f"checkpoint format version {got}, expected {version}")
    off += 8
    header = json.loads(blob[off:off + hlen])
    with np.load(io.BytesIO(blob[off + hlen:])) as z:
        arrays = {k: z[k] for k in z.files}
    return header, arrays


def write_container(path, magic, version, header, arrays) -> None:
    atomic_write(path, pack_container(magic, version, header, arrays))


def read_container(path, magic, version):
    return unpack_container(Path(path).read_bytes(), magic, version)
