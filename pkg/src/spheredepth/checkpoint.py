"""Binary parameter checkpoint container.

Layout: magic ``PSPH``, version u32, record count u32, then per record:
name length u32, utf-8 name, dtype tag u8 (0 = float32, 1 = float64),
rank u32, dims u32 each, raw little-endian data.  Round-trips bit-exactly.
"""

from __future__ import annotations

import struct
from typing import Dict, Sequence

import numpy as np

from .autodiff import Parameter
from .errors import CheckpointError

MAGIC = b"PSPH"
VERSION = 1

_DTYPE_TAGS = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}
_TAG_DTYPES = {0: np.dtype(np.float32), 1: np.dtype(np.float64)}


def save_checkpoint(params: Sequence[Parameter], path) -> None:
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", VERSION, len(params)))
        for p in params:
            name = p.name.encode("utf-8")
            arr = np.ascontiguousarray(p.tensor.data)
            f.write(struct.pack("<I", len(name)))
            f.write(name)
            f.write(struct.pack("<BI", _DTYPE_TAGS[arr.dtype], arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes())


def load_checkpoint(path) -> Dict[str, np.ndarray]:
    try:
        with open(path, "rb") as f:
            blob = f.read()
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e
    if blob[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {blob[:4]!r}, expected {MAGIC!r}")
    off = 4
    try:
        version, count = struct.unpack_from("<II", blob, off)
        off += 8
        if version != VERSION:
            raise CheckpointError(f"{path}: unsupported version {version}")
        out: Dict[str, np.ndarray] = {}
        for _ in range(count):
            (nlen,) = struct.unpack_from("<I", blob, off)
            off += 4
            name = blob[off:off + nlen].decode("utf-8")
            off += nlen
            tag, rank = struct.unpack_from("<BI", blob, off)
            off += 5
            dims = struct.unpack_from(f"<{rank}I", blob, off)
            off += 4 * rank
            dtype = _TAG_DTYPES.get(tag)
            if dtype is None:
                raise CheckpointError(f"{path}: unknown dtype tag {tag} for {name!r}")
            nbytes = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
            arr = np.frombuffer(blob[off:off + nbytes], dtype=dtype.newbyteorder("<"))
            if arr.size != int(np.prod(dims, dtype=np.int64)):
                raise CheckpointError(f"{path}: truncated data for {name!r}")
            off += nbytes
            out[name] = arr.astype(dtype).reshape(dims)
    except struct.error as e:
        raise CheckpointError(f"{path}: truncated checkpoint: {e}") from e
    return out


def restore_params(params: Sequence[Parameter], loaded: Dict[str, np.ndarray]) -> None:
    """Copy loaded arrays into parameters by name; shapes must match."""
    for p in params:
        if p.name not in loaded:
            raise CheckpointError(f"checkpoint missing parameter {p.name!r}")
        arr = loaded[p.name]
        if arr.shape != p.tensor.data.shape:
            raise CheckpointError(
                f"checkpoint parameter {p.name!r} has shape {arr.shape}, "
                f"model expects {p.tensor.data.shape}")
        p.tensor.data = arr.astype(p.tensor.data.dtype)
