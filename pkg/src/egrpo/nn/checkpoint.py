"""Versioned binary checkpoint of named float32 parameter arrays.

Layout (little-endian): magic "EGRPO-NN", u32 version, u32 count, then per
entry u16 name length, utf-8 name, u8 ndim, u32 dims, row-major float32
payload.
"""

import struct

import numpy as np

MAGIC = b"EGRPO-NN"
VERSION = 1


class CheckpointError(Exception):
    pass


def save_params(path, named_arrays):
    """Write a {name: array} dict; arrays are stored as float32."""
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", VERSION, len(named_arrays)))
        for name, arr in named_arrays.items():
            data = np.asarray(arr, dtype=np.float32)
            if data.ndim and not data.flags["C_CONTIGUOUS"]:
                data = np.ascontiguousarray(data)
            enc = name.encode("utf-8")
            f.write(struct.pack("<H", len(enc)))
            f.write(enc)
            f.write(struct.pack("<B", data.ndim))
            for d in data.shape:
                f.write(struct.pack("<I", d))
            f.write(data.tobytes())


def _read_exact(f, n):
    buf = f.read(n)
    if len(buf) != n:
        raise CheckpointError("truncated checkpoint file")
    return buf


def load_params(path):
    """Read back a {name: float32 array} dict."""
    with open(path, "rb") as f:
        if _read_exact(f, len(MAGIC)) != MAGIC:
            raise CheckpointError("bad magic: not a parameter checkpoint")
        version, count = struct.unpack("<II", _read_exact(f, 8))
        if version != VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        out = {}
        for _ in range(count):
            (nlen,) = struct.unpack("<H", _read_exact(f, 2))
            name = _read_exact(f, nlen).decode("utf-8")
            (ndim,) = struct.unpack("<B", _read_exact(f, 1))
            shape = tuple(
                struct.unpack("<I", _read_exact(f, 4))[0] for _ in range(ndim)
            )
            n = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(_read_exact(f, 4 * n), dtype="<f4").reshape(shape)
            out[name] = data.copy()
        return out


def load_into(path, named_tensors):
    """Load a checkpoint into existing parameter tensors (shape-checked)."""
    stored = load_params(path)
    for name, t in named_tensors.items():
        if name not in stored:
            raise CheckpointError(f"checkpoint missing parameter {name!r}")
        if stored[name].shape != t.data.shape:
            raise CheckpointError(
                f"shape mismatch for {name!r}: "
                f"{stored[name].shape} vs {t.data.shape}"
            )
        np.copyto(t.data, stored[name])
    return stored
