"""SDM1 checkpoints.

Layout: magic ``SDM1``; u32 little-endian header length N; N bytes of UTF-8
JSON (architecture, parameter names and shapes in declaration order, training
state); then every parameter as little-endian float32, row-major, in header
order. Optimizer moments go to a sidecar ``<path>.opt.npz``.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..config import RunConfig
from ..synthdata.formats import FormatError

MAGIC = b"SDM1"


def encode_checkpoint(model, train_state=None):
    header = {
        "format": "SDM1",
        "config": model.cfg.to_dict(),
        "in_dim": model.in_dim,
        "num_classes": model.num_classes,
        "params": [[name, list(p.shape)] for name, p in model.params.items()],
        "train_state": train_state or {},
    }
    blob = json.dumps(header, sort_keys=True).encode()
    parts = [MAGIC, struct.pack("<I", len(blob)), blob]
    parts += [np.ascontiguousarray(p.data, dtype="<f4").tobytes() for p in model.params.values()]
    return b"".join(parts)


def decode_checkpoint(buf, path=None):
    """Return ``(header, {name: float64 array})``."""
    if len(buf) < 4 or buf[:4] != MAGIC:
        raise FormatError(f"bad magic {bytes(buf[:4])!r}, expected {MAGIC!r}", 0, path)
    if len(buf) < 8:
        raise FormatError("truncated header length", len(buf), path)
    (n,) = struct.unpack_from("<I", buf, 4)
    if len(buf) < 8 + n:
        raise FormatError("truncated JSON header", len(buf), path)
    try:
        header = json.loads(bytes(buf[8:8 + n]).decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"unreadable JSON header ({e})", 8, path) from None
    try:
        layout = [(str(name), tuple(int(s) for s in shape)) for name, shape in header["params"]]
    except (KeyError, TypeError, ValueError):
        raise FormatError("header lacks a valid parameter table", 8, path) from None
    offset = 8 + n
    params = {}
    for name, shape in layout:
        count = int(np.prod(shape)) if shape else 1
        if len(buf) < offset + 4 * count:
            raise FormatError(f"truncated tensor {name}", len(buf), path)
        arr = np.frombuffer(buf, dtype="<f4", count=count, offset=offset)
        params[name] = arr.reshape(shape).astype(np.float64)
        offset += 4 * count
    if offset != len(buf):
        raise FormatError("trailing bytes after last tensor", offset, path)
    return header, params


def save_checkpoint(path, model, train_state=None, optimizer=None):
    path = Path(path)
    path.write_bytes(encode_checkpoint(model, train_state))
    if optimizer is not None:
        optimizer.save(str(path) + ".opt.npz")


def load_checkpoint(path, with_optimizer=False):
    """Rebuild the model (and optionally its optimizer) from ``path``."""
    from .model import SegDiffModel
    from .training import Adam

    path = Path(path)
    header, params = decode_checkpoint(path.read_bytes(), path)
    try:
        cfg = RunConfig.from_dict(header["config"])
        in_dim, num_classes = int(header["in_dim"]), int(header["num_classes"])
    except (KeyError, TypeError) as e:
        raise FormatError(f"incomplete header ({e})", 8, path) from None
    model = SegDiffModel(cfg, in_dim, num_classes)
    if list(model.params) != list(params):
        raise FormatError("parameter names do not match the architecture", None, path)
    for name, arr in params.items():
        if model.params[name].shape != arr.shape:
            raise FormatError(f"shape mismatch for {name}", None, path)
        model.params[name].data = arr
    if not with_optimizer:
        return model, header
    opt = Adam.load(str(path) + ".opt.npz", cfg) if Path(str(path) + ".opt.npz").exists() else None
    return model, header, opt
