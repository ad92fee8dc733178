"""Binary parameter snapshots ("CAFW" container).

Layout, all integers little-endian::

    magic      4 bytes   b"CAFW"
    version    u16       currently 1
    count      u32       number of tensor records
    then ``count`` records, each:
        name_len   u16
        name       name_len bytes, UTF-8
        ndim       u8
        dims       ndim x u32
        values     prod(dims) x f64, row-major

An empty-shape record (ndim 0) holds a single scalar value.
"""

from __future__ import annotations

import io
import struct
from pathlib import Path
from typing import BinaryIO, Mapping

import numpy as np

from ..errors import DataError

MAGIC = b"CAFW"
VERSION = 1


def dump_params(params: Mapping[str, np.ndarray], fh: BinaryIO) -> None:
    fh.write(MAGIC)
    fh.write(struct.pack("<HI", VERSION, len(params)))
    for name, arr in params.items():
        arr = np.asarray(arr, dtype="<f8")
        raw = name.encode("utf-8")
        fh.write(struct.pack("<H", len(raw)))
        fh.write(raw)
        fh.write(struct.pack("<B", arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        fh.write(arr.tobytes(order="C"))


def _read(fh: BinaryIO, n: int) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise DataError("truncated parameter file")
    return buf


def load_params_from(fh: BinaryIO) -> dict[str, np.ndarray]:
    if _read(fh, 4) != MAGIC:
        raise DataError("not a CAFW parameter file (bad magic)")
    version, count = struct.unpack("<HI", _read(fh, 6))
    if version != VERSION:
        raise DataError(f"unsupported CAFW version {version}")
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", _read(fh, 2))
        name = _read(fh, name_len).decode("utf-8")
        (ndim,) = struct.unpack("<B", _read(fh, 1))
        shape = struct.unpack(f"<{ndim}I", _read(fh, 4 * ndim))
        n = int(np.prod(shape)) if ndim else 1
        values = np.frombuffer(_read(fh, 8 * n), dtype="<f8").astype(np.float64)
        out[name] = values.reshape(shape)
    return out


def save_params(params: Mapping[str, np.ndarray], path: str | Path) -> None:
    with open(path, "wb") as fh:
        dump_params(params, fh)


def load_params(path: str | Path) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        return load_params_from(fh)


def params_to_bytes(params: Mapping[str, np.ndarray]) -> bytes:
    buf = io.BytesIO()
    dump_params(params, buf)
    return buf.getvalue()


def params_from_bytes(data: bytes) -> dict[str, np.ndarray]:
    return load_params_from(io.BytesIO(data))
