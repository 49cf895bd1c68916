"""Single-tensor binary format.

Layout (all little-endian)::

    b"BMTF" | version u8 (=1) | dtype u8 | rank u8 | dims u32 * rank
    | payload (row-major) | crc32(payload) u32

dtype 1 is float32; dtype 2 (float64) is used for checkpoints so that saved
parameters reload bit-for-bit.
"""

from __future__ import annotations

import os
import struct
import tempfile
import zlib
from pathlib import Path

import numpy as np

MAGIC = b"BMTF"
VERSION = 1
DTYPES = {1: np.dtype("<f4"), 2: np.dtype("<f8")}
CODES = {np.dtype("<f4"): 1, np.dtype("<f8"): 2}


class TensorFileError(ValueError):
    pass


def atomic_write(path, data: bytes):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def encode(array, dtype="<f4") -> bytes:
    dtype = np.dtype(dtype)
    if dtype not in CODES:
        raise TensorFileError(f"unsupported dtype {dtype}")
    arr = np.ascontiguousarray(np.asarray(array), dtype=dtype)
    if arr.ndim > 255:
        raise TensorFileError("rank too large")
    payload = arr.tobytes(order="C")
    header = MAGIC + struct.pack("<BBB", VERSION, CODES[dtype], arr.ndim)
    header += struct.pack(f"<{arr.ndim}I", *arr.shape)
    return header + payload + struct.pack("<I", zlib.crc32(payload))


def decode(blob: bytes) -> np.ndarray:
    if len(blob) < 7 or blob[:4] != MAGIC:
        raise TensorFileError("not a tensor file (bad magic)")
    version, code, rank = struct.unpack_from("<BBB", blob, 4)
    if version != VERSION:
        raise TensorFileError(f"unsupported format version {version}")
    if code not in DTYPES:
        raise TensorFileError(f"unknown dtype code {code}")
    off = 7 + 4 * rank
    if len(blob) < off:
        raise TensorFileError("truncated header")
    dims = struct.unpack_from(f"<{rank}I", blob, 7)
    dtype = DTYPES[code]
    nbytes = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
    if len(blob) != off + nbytes + 4:
        raise TensorFileError(f"payload length mismatch for dims {dims}")
    payload = blob[off : off + nbytes]
    (crc,) = struct.unpack_from("<I", blob, off + nbytes)
    if zlib.crc32(payload) != crc:
        raise TensorFileError("checksum mismatch")
    return np.frombuffer(payload, dtype=dtype).reshape(dims).copy()


def write_tensor(path, array, dtype="<f4"):
    atomic_write(path, encode(array, dtype))


def read_tensor(path) -> np.ndarray:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise TensorFileError(f"cannot read {path}: {exc}") from exc
    return decode(blob)
