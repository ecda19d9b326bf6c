"""On-disk matrix cache for snapshot and offline-basis data.

Each entry is one file: an 8-byte magic, two little-endian uint64 counts
(rows, columns), then the entries in column-major order as float64.
"""
from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path

import numpy as np

MAGIC = b"STGMSMAT"


def cache_key(**parts) -> str:
    blob = json.dumps(parts, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:32]


def write_matrix(path, M) -> None:
    M = np.atleast_2d(np.asarray(M, dtype="<f8"))
    if M.ndim != 2:
        raise ValueError("expected a matrix")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + f".tmp{os.getpid()}")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(np.array(M.shape, dtype="<u8").tobytes())
        fh.write(np.asfortranarray(M).tobytes(order="F"))
    os.replace(tmp, path)


def read_matrix(path) -> np.ndarray:
    with open(path, "rb") as fh:
        if fh.read(8) != MAGIC:
            raise ValueError(f"{path}: not a matrix cache file")
        rows, cols = (int(v) for v in np.frombuffer(fh.read(16), dtype="<u8"))
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != rows * cols:
        raise ValueError(f"{path}: truncated ({data.size} of {rows * cols} entries)")
    return data.reshape((rows, cols), order="F").copy()


class MatrixCache:
    """Directory of matrices addressed by ``(key, name)``."""

    def __init__(self, root):
        self.root = Path(root)

    def path(self, key: str, name: str) -> Path:
        return self.root / key[:2] / f"{key}.{name}.bin"

    def get(self, key: str, name: str) -> np.ndarray | None:
        p = self.path(key, name)
        if not p.exists():
            return None
        try:
            return read_matrix(p)
        except ValueError:
            return None

    def put(self, key: str, name: str, M) -> None:
        write_matrix(self.path(key, name), M)
