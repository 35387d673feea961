"""Binary checkpoint container for parameter sets.

Layout: an 8-byte magic, a little-endian header (format version, global
seed, record count), then one record per tensor: length-prefixed UTF-8
path, a frozen flag byte, ndim + dims, and the raw float64 buffer.
Round-trips are bit-exact by construction — values are written with
tobytes() and read back with frombuffer().
"""

from __future__ import annotations

import struct

import numpy as np

from .params import ParameterSet

MAGIC = b"ECGMCKP1"
FORMAT_VERSION = 1


class CheckpointError(RuntimeError):
    pass


def save_arrays(path: str, arrays: dict, seed: int, frozen: set | None = None) -> None:
    frozen = frozen or set()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<IqI", FORMAT_VERSION, int(seed), len(arrays)))
        for name in arrays:
            arr = np.ascontiguousarray(arrays[name], dtype=np.float64)
            nb = name.encode()
            f.write(struct.pack("<H", len(nb)))
            f.write(nb)
            f.write(struct.pack("<B", 1 if name in frozen else 0))
            f.write(struct.pack("<B", arr.ndim))
            for d in arr.shape:
                f.write(struct.pack("<I", d))
            f.write(arr.tobytes())


def load_arrays(path: str):
    """Returns (arrays dict, frozen set, seed, version)."""
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    version, seed, count = struct.unpack_from("<IqI", blob, 8)
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    off = 8 + struct.calcsize("<IqI")
    arrays = {}
    frozen = set()
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", blob, off)
        off += 2
        name = blob[off:off + nlen].decode()
        off += nlen
        is_frozen = blob[off]
        off += 1
        ndim = blob[off]
        off += 1
        shape = struct.unpack_from(f"<{ndim}I", blob, off) if ndim else ()
        off += 4 * ndim
        n = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(blob, dtype=np.float64, count=n, offset=off).reshape(shape).copy()
        off += 8 * n
        arrays[name] = arr
        if is_frozen:
            frozen.add(name)
    return arrays, frozen, seed, version


def save_params(path: str, params: ParameterSet, seed: int) -> None:
    arrays = {p: t.data for p, t in params.items()}
    frozen = {p for p, _ in params.items() if params.is_frozen(p)}
    save_arrays(path, arrays, seed=seed, frozen=frozen)


def load_params(path: str):
    """Returns (ParameterSet, seed)."""
    arrays, frozen, seed, _ = load_arrays(path)
    ps = ParameterSet()
    for name, arr in arrays.items():
        ps.add(name, arr, frozen=(name in frozen))
    return ps, seed
