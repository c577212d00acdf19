"""Flat tensor container used for every array artifact in this project.

A ``.tns`` file is a single UTF-8 JSON header line, e.g.

    {"dtype":"f32","shape":[64,64],"order":"row-major","byteorder":"little"}

terminated by ``\\n`` and followed immediately by the raw row-major
little-endian raster bytes.  The format is deliberately dumb so that any
language can read it with ten lines of code.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

TENSOR_SUFFIX = ".tns"

_DTYPES = {
    "f32": np.dtype("<f4"),
    "f64": np.dtype("<f8"),
    "i64": np.dtype("<i8"),
}
_DTYPE_NAMES = {v: k for k, v in _DTYPES.items()}


class ContainerError(ValueError):
    """Malformed tensor container (bad header, wrong size, bad dtype)."""


def write_tensor(path: str | Path, array: np.ndarray) -> Path:
    """Write ``array`` to ``path`` in the container format.

    The dtype is preserved for float32/float64/int64; anything else is an
    error so that writers stay honest about what readers will get back.
    """
    path = Path(path)
    arr = np.asarray(array)
    key = _DTYPE_NAMES.get(np.dtype(arr.dtype.name).newbyteorder("<"))
    if key is None:
        raise ContainerError(f"unsupported dtype {arr.dtype!r}; use f32/f64/i64")
    header = {
        "dtype": key,
        "shape": list(arr.shape),
        "order": "row-major",
        "byteorder": "little",
    }
    payload = arr.astype(_DTYPES[key], copy=False).tobytes(order="C")
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, separators=(",", ":")).encode("utf-8"))
        fh.write(b"\n")
        fh.write(payload)
    return path


def read_tensor(path: str | Path) -> np.ndarray:
    path = Path(path)
    with open(path, "rb") as fh:
        raw = fh.read()
    nl = raw.find(b"\n")
    if nl < 0:
        raise ContainerError(f"{path}: missing header newline")
    try:
        header = json.loads(raw[:nl].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ContainerError(f"{path}: malformed header: {exc}") from exc
    for field in ("dtype", "shape", "order", "byteorder"):
        if field not in header:
            raise ContainerError(f"{path}: header missing {field!r}")
    if header["order"] != "row-major" or header["byteorder"] != "little":
        raise ContainerError(f"{path}: unsupported layout {header!r}")
    dtype = _DTYPES.get(header["dtype"])
    if dtype is None:
        raise ContainerError(f"{path}: unknown dtype {header['dtype']!r}")
    shape = tuple(int(s) for s in header["shape"])
    body = raw[nl + 1 :]
    expected = int(np.prod(shape)) * dtype.itemsize if shape else dtype.itemsize
    if len(body) != expected:
        raise ContainerError(
            f"{path}: payload is {len(body)} bytes, header implies {expected}"
        )
    return np.frombuffer(body, dtype=dtype).reshape(shape).copy()


def write_json(path: str | Path, obj) -> Path:
    """Deterministic JSON sidecar writer (sorted keys, fixed formatting)."""
    path = Path(path)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def read_json(path: str | Path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


def sha256_file(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()
