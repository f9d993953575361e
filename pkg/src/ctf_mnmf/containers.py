"""Binary container for real or complex tensors (filters, NMF factors).

Layout, little-endian::

    4 bytes   magic b"CTFA"
    1 byte    dtype code: b"f" float64, b"c" complex128
    1 byte    ndim
    8*ndim    uint64 shape
    ...       C-order data (complex values as interleaved real/imag float64)
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

_MAGIC = b"CTFA"
_CODES = {b"f": np.dtype("<f8"), b"c": np.dtype("<c16")}


def save_array(path: str | Path, array: np.ndarray) -> None:
    array = np.asarray(array)
    code = b"c" if np.iscomplexobj(array) else b"f"
    data = np.asarray(array, dtype=_CODES[code], order="C")
    header = _MAGIC + code + struct.pack("<B", data.ndim)
    header += struct.pack(f"<{data.ndim}Q", *data.shape)
    with open(path, "wb") as f:
        f.write(header)
        f.write(data.tobytes())


def load_array(path: str | Path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:4] != _MAGIC or raw[4:5] not in _CODES:
        raise ValueError(f"{path}: not a tensor container")
    dtype = _CODES[raw[4:5]]
    ndim = raw[5]
    shape = struct.unpack_from(f"<{ndim}Q", raw, 6)
    offset = 6 + 8 * ndim
    count = int(np.prod(shape)) if ndim else 1
    return np.frombuffer(raw, dtype=dtype, count=count, offset=offset).reshape(shape).copy()
