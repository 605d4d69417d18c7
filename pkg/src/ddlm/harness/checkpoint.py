"""Binary checkpoint format.

Layout (all integers little-endian)::

    b"DDLM"            magic
    u32                format version
    u64, bytes         config snapshot: length, UTF-8 JSON
    u32                tensor count
    per tensor:
      u16, bytes       name length, UTF-8 name
      u8               rank
      u64 * rank       extents
      u8               dtype code (1 = float32, 2 = float64)
      u64, bytes       byte length, raw little-endian values
    u64                checksum: BLAKE2b-64 of every preceding byte
"""

from __future__ import annotations

import hashlib
import io
import json
import struct
from pathlib import Path

import numpy as np

from ddlm.errors import CheckpointError
from ddlm.model import ModelParams
from ddlm.numerics import parameter

MAGIC = b"DDLM"
VERSION = 1
DTYPE_CODES = {np.dtype("<f4"): 1, np.dtype("<f8"): 2}
CODE_DTYPES = {v: k for k, v in DTYPE_CODES.items()}


def _checksum(payload: bytes) -> int:
    return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "little")


def encode_checkpoint(params: ModelParams, snapshot: dict) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", VERSION))
    blob = json.dumps(snapshot, sort_keys=True, separators=(",", ":")).encode("utf-8")
    buf.write(struct.pack("<Q", len(blob)))
    buf.write(blob)
    buf.write(struct.pack("<I", len(params)))
    for name, tensor in params.items():
        arr = np.ascontiguousarray(tensor.data)
        dt = arr.dtype.newbyteorder("<")
        if dt not in DTYPE_CODES:
            raise CheckpointError(f"unsupported dtype {arr.dtype} for {name!r}")
        raw = arr.astype(dt, copy=False).tobytes(order="C")
        encoded = name.encode("utf-8")
        buf.write(struct.pack("<H", len(encoded)))
        buf.write(encoded)
        buf.write(struct.pack("<B", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        buf.write(struct.pack("<B", DTYPE_CODES[dt]))
        buf.write(struct.pack("<Q", len(raw)))
        buf.write(raw)
    payload = buf.getvalue()
    return payload + struct.pack("<Q", _checksum(payload))


def decode_checkpoint(data: bytes, source: str = "<bytes>") -> tuple[ModelParams, dict]:
    if len(data) < 16 or data[:4] != MAGIC:
        raise CheckpointError(f"{source}: not a DDLM checkpoint")
    payload, (stored,) = data[:-8], struct.unpack("<Q", data[-8:])
    (version,) = struct.unpack_from("<I", data, 4)
    if version != VERSION:
        raise CheckpointError(f"{source}: checkpoint format version {version}, this build reads version {VERSION}")
    if _checksum(payload) != stored:
        raise CheckpointError(f"{source}: checksum mismatch (file corrupted or truncated)")
    try:
        pos = 8
        (blen,) = struct.unpack_from("<Q", payload, pos)
        pos += 8
        snapshot = json.loads(payload[pos : pos + blen].decode("utf-8"))
        pos += blen
        (count,) = struct.unpack_from("<I", payload, pos)
        pos += 4
        params = ModelParams()
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", payload, pos)
            pos += 2
            name = payload[pos : pos + nlen].decode("utf-8")
            pos += nlen
            (rank,) = struct.unpack_from("<B", payload, pos)
            pos += 1
            shape = struct.unpack_from(f"<{rank}Q", payload, pos)
            pos += 8 * rank
            (code,) = struct.unpack_from("<B", payload, pos)
            pos += 1
            (nbytes,) = struct.unpack_from("<Q", payload, pos)
            pos += 8
            arr = np.frombuffer(payload[pos : pos + nbytes], dtype=CODE_DTYPES[code]).reshape(shape)
            pos += nbytes
            params[name] = parameter(arr.astype(arr.dtype.newbyteorder("=")), name=name)
    except (struct.error, KeyError, ValueError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"{source}: malformed checkpoint ({exc})") from None
    if pos != len(payload):
        raise CheckpointError(f"{source}: {len(payload) - pos} trailing bytes before checksum")
    return params, snapshot


def save_checkpoint(path, params: ModelParams, snapshot: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_checkpoint(params, snapshot))
    return path


def load_checkpoint(path) -> tuple[ModelParams, dict]:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    return decode_checkpoint(data, str(path))
