"""``HNGE`` checkpoint files.

Layout (little-endian): magic ``HNGE``, u32 version, then per parameter:
u32 name length, UTF-8 name, u32 rank, rank x u32 dims, raw float32 data.
Records run until end of file.
"""

import struct
from pathlib import Path

import numpy as np

from ..errors import CheckpointError, ShapeMismatch

MAGIC = b"HNGE"
VERSION = 1


def save_checkpoint(store, path) -> None:
    path = Path(path)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", VERSION))
        for name, p in store.params.items():
            raw = name.encode("utf-8")
            f.write(struct.pack("<I", len(raw)))
            f.write(raw)
            f.write(struct.pack("<I", p.data.ndim))
            f.write(struct.pack(f"<{p.data.ndim}I", *p.data.shape))
            f.write(np.ascontiguousarray(p.data, dtype="<f4").tobytes())


def read_checkpoint(path) -> dict[str, np.ndarray]:
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise CheckpointError(f"{path}: not an HNGE checkpoint")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    pos = 8
    out = {}
    try:
        while pos < len(data):
            (nlen,) = struct.unpack_from("<I", data, pos)
            pos += 4
            name = data[pos: pos + nlen].decode("utf-8")
            pos += nlen
            (rank,) = struct.unpack_from("<I", data, pos)
            pos += 4
            dims = struct.unpack_from(f"<{rank}I", data, pos)
            pos += 4 * rank
            count = int(np.prod(dims)) if rank else 1
            arr = np.frombuffer(data, dtype="<f4", count=count, offset=pos).reshape(dims)
            pos += 4 * count
            out[name] = arr.astype(np.float32)
    except (struct.error, ValueError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"{path}: truncated or corrupt ({exc})") from exc
    return out


def load_checkpoint(store, path) -> None:
    """Load into a registered store; names and shapes must match exactly."""
    state = read_checkpoint(path)
    extra = set(state) - set(store.params)
    if extra:
        raise CheckpointError(f"unknown parameters in checkpoint: {sorted(extra)}")
    try:
        store.load_state(state)
    except KeyError as exc:
        raise CheckpointError(str(exc)) from exc
    except ShapeMismatch as exc:
        raise CheckpointError(str(exc)) from exc
