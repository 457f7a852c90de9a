"""Binary feature (SDF1) and label (SDL1) files.

Both start with a 4-byte magic and two little-endian u32 dimensions. SDF1
payload is L*D little-endian float32 values, row-major; SDL1 payload is L*C
bytes, each 0 or 1.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

FEATURE_MAGIC = b"SDF1"
LABEL_MAGIC = b"SDL1"
HEADER = struct.Struct("<4sII")


class FormatError(ValueError):
    def __init__(self, message, offset=None, path=None):
        where = "" if offset is None else f" at byte offset {offset}"
        src = "" if path is None else f" in {path}"
        super().__init__(f"{message}{where}{src}")
        self.offset = offset
        self.path = path


def _parse_header(buf, magic, path):
    if len(buf) < 4:
        raise FormatError(f"truncated magic ({len(buf)} bytes)", 0, path)
    if buf[:4] != magic:
        raise FormatError(f"bad magic {bytes(buf[:4])!r}, expected {magic!r}", 0, path)
    if len(buf) < HEADER.size:
        raise FormatError("truncated header", len(buf), path)
    _, a, b = HEADER.unpack_from(buf)
    return a, b


def encode_features(x):
    x = np.asarray(x)
    if x.ndim != 2:
        raise ValueError(f"features must be L x D, got shape {x.shape}")
    return HEADER.pack(FEATURE_MAGIC, *x.shape) + np.ascontiguousarray(x, dtype="<f4").tobytes()


def decode_features(buf, path=None):
    L, D = _parse_header(buf, FEATURE_MAGIC, path)
    need = HEADER.size + 4 * L * D
    if len(buf) < need:
        raise FormatError(f"truncated payload: need {need} bytes, have {len(buf)}", len(buf), path)
    if len(buf) > need:
        raise FormatError("trailing bytes after payload", need, path)
    data = np.frombuffer(buf, dtype="<f4", count=L * D, offset=HEADER.size)
    return data.reshape(L, D).astype(np.float64)


def encode_labels(y):
    y = np.asarray(y)
    if y.ndim != 2:
        raise ValueError(f"labels must be L x C, got shape {y.shape}")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be binary")
    return HEADER.pack(LABEL_MAGIC, *y.shape) + np.ascontiguousarray(y, dtype=np.uint8).tobytes()


def decode_labels(buf, path=None):
    L, C = _parse_header(buf, LABEL_MAGIC, path)
    need = HEADER.size + L * C
    if len(buf) < need:
        raise FormatError(f"truncated payload: need {need} bytes, have {len(buf)}", len(buf), path)
    if len(buf) > need:
        raise FormatError("trailing bytes after payload", need, path)
    data = np.frombuffer(buf, dtype=np.uint8, count=L * C, offset=HEADER.size)
    bad = np.flatnonzero(data > 1)
    if bad.size:
        raise FormatError(f"label byte {data[bad[0]]} is not 0 or 1", HEADER.size + int(bad[0]), path)
    return data.reshape(L, C).copy()


def write_features(path, x):
    Path(path).write_bytes(encode_features(x))


def read_features(path):
    return decode_features(Path(path).read_bytes(), path)


def write_labels(path, y):
    Path(path).write_bytes(encode_labels(y))


def read_labels(path):
    return decode_labels(Path(path).read_bytes(), path)
