"""Versioned binary container for named float64 tensors.

Layout (all integers little-endian):

    magic   4 bytes  b"VAEL"
    version u32      currently 1
    count   u32      number of named entries
    entry*  u32 name length | name bytes (UTF-8)
            u32 rank | u64 x rank extents
            float64-le x prod(extents) raw values
    [meta]  u32 length | UTF-8 JSON  (optional trailing block)

Round-trips are bit-exact.
"""
from __future__ import annotations

import json
import struct

import numpy as np

MAGIC = b"VAEL"
VERSION = 1


class ContainerFormatError(Exception):
    pass


def write_container(path, entries, metadata=None):
    """``entries``: mapping or iterable of (name, array) in the order to persist."""
    items = entries.items() if hasattr(entries, "items") else entries
    blob = bytearray()
    blob += MAGIC
    count = 0
    body = bytearray()
    for name, arr in items:
        arr = np.asarray(arr, dtype=np.float64)  # asarray keeps 0-d rank
        name_b = name.encode("utf-8")
        body += struct.pack("<I", len(name_b))
        body += name_b
        body += struct.pack("<I", arr.ndim)
        for extent in arr.shape:
            body += struct.pack("<Q", extent)
        body += arr.astype("<f8", copy=False).tobytes()
        count += 1
    blob += struct.pack("<II", VERSION, count)
    blob += body
    if metadata is not None:
        meta_b = json.dumps(metadata, sort_keys=True).encode("utf-8")
        blob += struct.pack("<I", len(meta_b))
        blob += meta_b
    with open(path, "wb") as fh:
        fh.write(blob)


def read_container(path):
    """Returns (ordered dict name -> float64 array, metadata dict or None)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise ContainerFormatError(f"bad magic {blob[:4]!r}")
    version, count = struct.unpack_from("<II", blob, 4)
    if version != VERSION:
        raise ContainerFormatError(f"unsupported container version {version}")
    pos = 12
    entries = {}
    try:
        for _ in range(count):
            (name_len,) = struct.unpack_from("<I", blob, pos)
            pos += 4
            name = blob[pos : pos + name_len].decode("utf-8")
            pos += name_len
            (rank,) = struct.unpack_from("<I", blob, pos)
            pos += 4
            extents = struct.unpack_from(f"<{rank}Q", blob, pos)
            pos += 8 * rank
            n = 1
            for e in extents:
                n *= e
            arr = np.frombuffer(blob, dtype="<f8", count=n, offset=pos).reshape(extents)
            pos += 8 * n
            entries[name] = arr.astype(np.float64)
    except (struct.error, ValueError) as exc:
        raise ContainerFormatError(f"truncated container: {exc}") from exc
    metadata = None
    if pos < len(blob):
        (meta_len,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        metadata = json.loads(blob[pos : pos + meta_len].decode("utf-8"))
        pos += meta_len
    if pos != len(blob):
        raise ContainerFormatError("trailing bytes after container payload")
    return entries, metadata
