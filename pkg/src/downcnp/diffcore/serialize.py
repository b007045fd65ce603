"""Flat binary tensor files.

Layout (little-endian): ``b"DCNP"``, version ``u32``, rank ``u32``, one
``u32`` per extent, then the values as row-major ``f64``.
"""

import struct

import numpy as np

MAGIC = b"DCNP"
VERSION = 1


class TensorFormatError(ValueError):
    pass


def tensor_to_bytes(array):
    arr = np.asarray(array, dtype="<f8")  # tobytes() below is always C order
    header = MAGIC + struct.pack("<II", VERSION, arr.ndim)
    header += struct.pack(f"<{arr.ndim}I", *arr.shape)
    return header + arr.tobytes()


def tensor_from_bytes(buf):
    if buf[:4] != MAGIC:
        raise TensorFormatError("bad magic at byte 0")
    if len(buf) < 12:
        raise TensorFormatError("truncated header at byte 4")
    version, rank = struct.unpack_from("<II", buf, 4)
    if version != VERSION:
        raise TensorFormatError(f"unsupported version {version} at byte 4")
    offset = 12
    if len(buf) < offset + 4 * rank:
        raise TensorFormatError(f"truncated extents at byte {offset}")
    shape = struct.unpack_from(f"<{rank}I", buf, offset)
    offset += 4 * rank
    n = int(np.prod(shape, dtype=np.int64))
    if len(buf) != offset + 8 * n:
        raise TensorFormatError(f"expected {8 * n} data bytes at byte {offset}, found {len(buf) - offset}")
    return np.frombuffer(buf, dtype="<f8", offset=offset, count=n).reshape(shape).astype(np.float64)


def save_tensor(path, array):
    with open(path, "wb") as fh:
        fh.write(tensor_to_bytes(array))


def load_tensor(path):
    with open(path, "rb") as fh:
        return tensor_from_bytes(fh.read())
