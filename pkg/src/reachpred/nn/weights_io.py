"""Binary weight files: magic, version, JSON header, named float64 blocks, CRC.

Layout (all integers little-endian):
    magic  b"RPWT"
    uint32 format version
    uint32 header length, then that many bytes of UTF-8 JSON
    uint32 block count
    per block: uint16 name length + name bytes, uint8 ndim,
               uint32 dims, float64 data
    uint32 CRC-32 of everything before it
"""

from __future__ import annotations

import json
import struct
import zlib

import numpy as np

from ..errors import CorruptFile, SchemaError

MAGIC = b"RPWT"
VERSION = 1


def save_weights(path: str, blocks: dict, header: dict | None = None):
    out = bytearray()
    out += MAGIC
    out += struct.pack("<I", VERSION)
    hdr = json.dumps(header or {}, sort_keys=True).encode()
    out += struct.pack("<I", len(hdr))
    out += hdr
    out += struct.pack("<I", len(blocks))
    for name, arr in blocks.items():
        # asarray, not ascontiguousarray: the latter promotes 0-d to 1-d
        arr = np.asarray(arr, dtype="<f8")
        nb = name.encode()
        out += struct.pack("<H", len(nb))
        out += nb
        out += struct.pack("<B", arr.ndim)
        out += struct.pack(f"<{arr.ndim}I", *arr.shape)
        out += arr.tobytes()
    out += struct.pack("<I", zlib.crc32(bytes(out)) & 0xFFFFFFFF)
    with open(path, "wb") as fh:
        fh.write(bytes(out))


def load_weights(path: str) -> tuple:
    """Read a weight file back as (blocks dict, header dict)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 16 or raw[:4] != MAGIC:
        raise CorruptFile(f"{path}: not a weight file (bad magic)")
    (stored_crc,) = struct.unpack("<I", raw[-4:])
    if zlib.crc32(raw[:-4]) & 0xFFFFFFFF != stored_crc:
        raise CorruptFile(f"{path}: checksum mismatch, file corrupt")
    off = 4
    (version,) = struct.unpack_from("<I", raw, off)
    off += 4
    if version != VERSION:
        raise SchemaError(f"{path}: unsupported weight format version {version}")
    (hlen,) = struct.unpack_from("<I", raw, off)
    off += 4
    try:
        header = json.loads(raw[off : off + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise SchemaError(f"{path}: bad header ({exc})") from None
    off += hlen
    (n_blocks,) = struct.unpack_from("<I", raw, off)
    off += 4
    blocks = {}
    for _ in range(n_blocks):
        (nlen,) = struct.unpack_from("<H", raw, off)
        off += 2
        name = raw[off : off + nlen].decode()
        off += nlen
        (ndim,) = struct.unpack_from("<B", raw, off)
        off += 1
        shape = struct.unpack_from(f"<{ndim}I", raw, off)
        off += 4 * ndim
        count = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(raw, dtype="<f8", count=count, offset=off).reshape(shape)
        off += 8 * count
        blocks[name] = arr.astype(float)
    if off != len(raw) - 4:
        raise CorruptFile(f"{path}: trailing bytes after parameter blocks")
    return blocks, header
