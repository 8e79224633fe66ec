"""File formats: binary matrices, IDX image sets, PGM directories, atomic writes."""

from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path
from typing import Union

import numpy as np
from PIL import Image

from .core import ValidationError, as_nonneg

__all__ = [
    "MATRIX_MAGIC",
    "atomic_write",
    "write_matrix",
    "read_matrix",
    "read_idx",
    "write_idx",
    "read_pgm_dir",
    "load_matrix",
    "write_json",
]

MATRIX_MAGIC = b"NMF1"
_HEADER = struct.Struct("<4sII")

PathLike = Union[str, Path]


def atomic_write(path: PathLike, data: Union[bytes, str]) -> None:
    """Write to a temporary file in the target directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode("utf-8")
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path: PathLike, obj) -> None:
    atomic_write(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def matrix_bytes(X) -> bytes:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise ValidationError("only 2-D matrices can be stored")
    return _HEADER.pack(MATRIX_MAGIC, *X.shape) + X.astype("<f8").tobytes(order="F")


def write_matrix(path: PathLike, X) -> None:
    """Store ``X`` as "NMF1", u32 rows, u32 cols, then column-major f64 (all little-endian)."""
    atomic_write(path, matrix_bytes(X))


def read_matrix(path: PathLike, nonneg: bool = True) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValidationError(f"{path}: too short for a matrix header")
    magic, rows, cols = _HEADER.unpack_from(raw)
    if magic != MATRIX_MAGIC:
        raise ValidationError(f"{path}: bad magic {magic!r}")
    expected = _HEADER.size + 8 * rows * cols
    if len(raw) != expected:
        raise ValidationError(f"{path}: {len(raw)} bytes, expected {expected} for {rows}x{cols}")
    X = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).reshape((rows, cols), order="F").astype(float)
    return as_nonneg(X, str(path)) if nonneg else X


def read_idx(path: PathLike) -> np.ndarray:
    """Unsigned-byte IDX image set as an ``(h*w) x n`` matrix scaled to [0, 1]."""
    raw = Path(path).read_bytes()
    if len(raw) < 4 or raw[0] != 0 or raw[1] != 0 or raw[2] != 0x08:
        raise ValidationError(f"{path}: not an unsigned-byte IDX file")
    ndim = raw[3]
    if ndim < 2:
        raise ValidationError(f"{path}: IDX file holds labels, not images")
    dims = struct.unpack_from(f">{ndim}I", raw, 4)
    offset = 4 + 4 * ndim
    n = dims[0]
    size = int(np.prod(dims[1:]))
    if len(raw) != offset + n * size:
        raise ValidationError(f"{path}: size does not match dimensions {dims}")
    data = np.frombuffer(raw, dtype=np.uint8, offset=offset).reshape(n, size)
    return data.T.astype(float) / 255.0


def write_idx(path: PathLike, images) -> None:
    """Write ``(n, h, w)`` images with values in [0, 1] (or uint8) as an IDX file."""
    images = np.asarray(images)
    if images.dtype != np.uint8:
        images = np.round(np.clip(images, 0, 1) * 255).astype(np.uint8)
    header = struct.pack(">BBBB", 0, 0, 0x08, images.ndim) + struct.pack(f">{images.ndim}I", *images.shape)
    atomic_write(path, header + images.tobytes())


def read_pgm_dir(path: PathLike) -> np.ndarray:
    """All ``*.pgm`` files of a directory (sorted by name) as columns scaled to [0, 1]."""
    files = sorted(Path(path).glob("*.pgm"))
    if not files:
        raise ValidationError(f"{path}: no .pgm files")
    cols = []
    shape = None
    for f in files:
        with Image.open(f) as img:
            arr = np.asarray(img)
        if shape is None:
            shape = arr.shape
        elif arr.shape != shape:
            raise ValidationError(f"{f}: shape {arr.shape} differs from {shape}")
        peak = 65535.0 if arr.dtype == np.uint16 else 255.0
        cols.append(arr.reshape(-1).astype(float) / peak)
    return np.stack(cols, axis=1)


def load_matrix(path: PathLike) -> np.ndarray:
    """Data matrix from a MatrixFile, an IDX file or a PGM directory."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    if path.is_dir():
        return read_pgm_dir(path)
    with open(path, "rb") as f:
        head = f.read(4)
    if head == MATRIX_MAGIC:
        return read_matrix(path)
    return read_idx(path)
