"""Versioned binary checkpoint container.

Byte layout (all integers little-endian, all payloads little-endian float32):

    offset  size         field
    0       4            magic ``b"AVGC"``
    4       4            uint32 format version (currently 1)
    8       4            uint32 length C of the config blob
    12      C            UTF-8 JSON config blob
    12+C    4            uint32 number of named arrays
    then, per array:
            2            uint16 length P of the path
            P            UTF-8 parameter path
            1            uint8 number of dimensions (0 for scalars)
            4 * ndim     uint32 dimensions, outermost first
            4 * numel    float32 payload, row-major

Trainable parameters are stored under their model paths, batch-norm running
buffers under ``<layer>.bn.running_mean`` / ``running_var``, and optimizer
state under ``optim.m.<path>``, ``optim.v.<path>`` and the scalar
``optim.step``.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .errors import ParseError
from .nn import ParamStore

MAGIC = b"AVGC"
VERSION = 1

OPT_M = "optim.m."
OPT_V = "optim.v."
OPT_STEP = "optim.step"


def write_arrays(path, arrays: dict[str, np.ndarray], config: dict) -> None:
    """Write named float arrays plus a JSON config blob to ``path``."""
    blob = json.dumps(config, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(struct.pack("<I", len(arrays)))
        for name in sorted(arrays):
            data = np.asarray(arrays[name], dtype="<f4", order="C")
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", data.ndim))
            for dim in data.shape:
                fh.write(struct.pack("<I", dim))
            fh.write(data.tobytes())


def read_arrays(path) -> tuple[dict[str, np.ndarray], dict]:
    """Read back a container written by :func:`write_arrays`."""
    with open(path, "rb") as fh:
        raw = fh.read()

    def take(offset, size, what):
        if offset + size > len(raw):
            raise ParseError(f"truncated checkpoint while reading {what}")
        return raw[offset : offset + size], offset + size

    chunk, pos = take(0, 4, "magic")
    if chunk != MAGIC:
        raise ParseError("not a checkpoint file (bad magic)")
    chunk, pos = take(pos, 4, "version")
    version = struct.unpack("<I", chunk)[0]
    if version != VERSION:
        raise ParseError(f"unsupported checkpoint version {version}")
    chunk, pos = take(pos, 4, "config length")
    blob_len = struct.unpack("<I", chunk)[0]
    chunk, pos = take(pos, blob_len, "config blob")
    try:
        config = json.loads(chunk.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ParseError(f"bad config blob: {exc}") from exc
    chunk, pos = take(pos, 4, "array count")
    count = struct.unpack("<I", chunk)[0]

    arrays: dict[str, np.ndarray] = {}
    for _ in range(count):
        chunk, pos = take(pos, 2, "path length")
        name_len = struct.unpack("<H", chunk)[0]
        chunk, pos = take(pos, name_len, "path")
        name = chunk.decode("utf-8")
        chunk, pos = take(pos, 1, "ndim")
        ndim = chunk[0]
        shape = []
        for _ in range(ndim):
            chunk, pos = take(pos, 4, "dimension")
            shape.append(struct.unpack("<I", chunk)[0])
        numel = int(np.prod(shape, dtype=np.int64)) if shape else 1
        chunk, pos = take(pos, 4 * numel, f"payload of {name!r}")
        arrays[name] = np.frombuffer(chunk, dtype="<f4").reshape(shape).copy()
    if pos != len(raw):
        raise ParseError("trailing bytes after last array")
    return arrays, config


def save_state(path, store: ParamStore, buffers: dict[str, np.ndarray], config: dict) -> None:
    """Persist parameters, buffers and optimizer state in one container."""
    arrays: dict[str, np.ndarray] = {}
    for name, tensor in store.params.items():
        arrays[name] = tensor.data
        arrays[OPT_M + name] = store.m[name]
        arrays[OPT_V + name] = store.v[name]
    arrays[OPT_STEP] = np.asarray(float(store.step))
    for name, buf in buffers.items():
        if name in arrays:
            raise ValueError(f"buffer path collides with parameter: {name!r}")
        arrays[name] = buf
    write_arrays(path, arrays, config)


def load_state(path, dtype=np.float32) -> tuple[ParamStore, dict[str, np.ndarray], dict]:
    """Rebuild a ParamStore, buffer dict and config from a container file."""
    arrays, config = read_arrays(path)
    store = ParamStore()
    buffers: dict[str, np.ndarray] = {}
    moments_m: dict[str, np.ndarray] = {}
    moments_v: dict[str, np.ndarray] = {}
    for name, data in arrays.items():
        if name == OPT_STEP:
            store.step = int(data.reshape(()))
        elif name.startswith(OPT_M):
            moments_m[name[len(OPT_M) :]] = data.astype(dtype)
        elif name.startswith(OPT_V):
            moments_v[name[len(OPT_V) :]] = data.astype(dtype)
        elif ".bn.running_" in name:
            buffers[name] = data.astype(dtype)
        else:
            store.add(name, data.astype(dtype))
    for name in store.params:
        if name in moments_m:
            store.m[name] = moments_m[name]
        if name in moments_v:
            store.v[name] = moments_v[name]
    return store, buffers, config
