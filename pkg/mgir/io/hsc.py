"""
Description:
HSC1 binary tensor container.

    offset 0          magic b'HSC1'
    offset 4          rank, uint32 little-endian
    offset 8          rank extents, uint32 little-endian each
    offset 8 + 4*rank prod(extents) float32 little-endian values, row-major

Files must end exactly after the payload. Writes go through a temporary file in the target
directory followed by an atomic rename, so readers never see a partial file.
"""

import os
import struct
import tempfile

import numpy as np

import mgir.load_env as mgir_env
from mgir.errors import FormatError

logger = mgir_env.logger

MAGIC = b'HSC1'
MAX_RANK = 32
_U32 = struct.Struct('<I')


def encode_hsc(array):
    array = np.asarray(array)
    header = MAGIC + _U32.pack(array.ndim) + struct.pack(f'<{array.ndim}I', *array.shape)
    return header + np.ascontiguousarray(array, dtype='<f4').tobytes(order='C')


def decode_hsc(data):
    """Parse HSC1 bytes into a float32 array; every defect raises FormatError with its offset."""
    if len(data) < 4:
        raise FormatError(f"file too short for the magic: {len(data)} bytes", offset=len(data))
    if data[:4] != MAGIC:
        raise FormatError(f"bad magic {data[:4]!r}, expected {MAGIC!r}", offset=0)
    if len(data) < 8:
        raise FormatError("file ends inside the rank field", offset=len(data))
    (rank,) = _U32.unpack_from(data, 4)
    if rank > MAX_RANK:
        raise FormatError(f"rank {rank} exceeds the supported maximum {MAX_RANK}", offset=4)
    header = 8 + 4 * rank
    if len(data) < header:
        raise FormatError(f"file ends inside the extents of a rank-{rank} tensor", offset=len(data))
    shape = struct.unpack_from(f'<{rank}I', data, 8)
    expected = 4 * int(np.prod(shape, dtype=np.int64))
    available = len(data) - header
    if available < expected:
        raise FormatError(f"payload truncated: {available} of {expected} bytes for shape {shape}",
                          offset=len(data))
    if available > expected:
        raise FormatError(f"{available - expected} trailing bytes after the payload", offset=header + expected)
    return np.frombuffer(data, dtype='<f4', count=expected // 4, offset=header).astype(np.float32).reshape(shape)


def _stage(path, data):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix='.' + os.path.basename(path) + '.', suffix='.tmp', dir=directory)
    try:
        with os.fdopen(fd, 'wb') as f:
            f.write(data)
            f.flush()
            os.fsync(f.fileno())
    except BaseException:
        os.remove(tmp)
        raise
    return tmp


def atomic_write_all(items):
    """
    Write (path, bytes) pairs. Every file is written and synced under a temporary name first;
    only then are they renamed into place, in the given order.
    """
    staged = []
    try:
        for path, data in items:
            staged.append((_stage(path, data), path))
        for tmp, path in staged:
            os.replace(tmp, path)
    except BaseException:
        for tmp, _ in staged:
            if os.path.exists(tmp):
                os.remove(tmp)
        raise


def atomic_write(path, data):
    atomic_write_all([(path, data)])


def write_hsc(path, array):
    atomic_write(path, encode_hsc(array))
    logger.debug(f"Wrote {np.shape(array)} tensor to {path}")


def write_hsc_all(items):
    """(path, array) pairs that must appear together; see atomic_write_all."""
    atomic_write_all([(path, encode_hsc(array)) for path, array in items])
    for path, array in items:
        logger.debug(f"Wrote {np.shape(array)} tensor to {path}")


def read_hsc(path):
    with open(path, 'rb') as f:
        data = f.read()
    try:
        return decode_hsc(data)
    except FormatError as e:
        logger.error(f"Malformed HSC1 file {path}: {e}")
        e.extra_info = str(path)
        raise
