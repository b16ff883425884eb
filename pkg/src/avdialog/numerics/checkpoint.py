"""Self-describing binary checkpoint files.

Byte layout (all integers little-endian):

    offset 0: magic, 8 bytes, b"AVLMCKPT"
    u32  length of the config block
    config block: UTF-8 JSON object (model config plus free-form metadata)
    u32  tensor count
    per tensor, in the order written:
        u16  name byte length, then name (UTF-8)
        u8   ndim
        ndim x u32  dims
        prod(dims) x f32  raw row-major little-endian data

Tensors are written in sorted-name order so identical parameters always
produce byte-identical files.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .model import TransformerConfig, TransformerParams
from .tensor import NumericsError, Tensor

MAGIC = b"AVLMCKPT"


class CheckpointError(NumericsError):
    pass


def save_tensors(path, arrays: dict[str, np.ndarray], meta: dict) -> None:
    path = Path(path)
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        f.write(struct.pack("<I", len(arrays)))
        for name in sorted(arrays):
            arr = np.asarray(arrays[name], dtype="<f4")
            nb = name.encode("utf-8")
            f.write(struct.pack("<H", len(nb)))
            f.write(nb)
            f.write(struct.pack("<B", arr.ndim))
            for dim in arr.shape:
                f.write(struct.pack("<I", dim))
            f.write(arr.tobytes())


def load_tensors(path) -> tuple[dict[str, np.ndarray], dict]:
    path = Path(path)
    data = path.read_bytes()
    if data[:8] != MAGIC:
        raise CheckpointError(f"{path}: bad magic, not a checkpoint file")
    off = 8

    def take(fmt):
        nonlocal off
        size = struct.calcsize(fmt)
        vals = struct.unpack_from(fmt, data, off)
        off += size
        return vals[0] if len(vals) == 1 else vals

    meta_len = take("<I")
    meta = json.loads(data[off:off + meta_len].decode("utf-8"))
    off += meta_len
    count = take("<I")
    arrays: dict[str, np.ndarray] = {}
    for _ in range(count):
        name_len = take("<H")
        name = data[off:off + name_len].decode("utf-8")
        off += name_len
        ndim = take("<B")
        shape = tuple(take("<I") for _ in range(ndim))
        n = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(data, dtype="<f4", count=n, offset=off).reshape(shape)
        off += 4 * n
        arrays[name] = arr.copy()
    return arrays, meta


def save_model(path, params: TransformerParams, config: TransformerConfig,
               extra_meta: dict | None = None) -> None:
    meta = {"kind": "transformer", "config": config.to_dict()}
    if extra_meta:
        meta.update(extra_meta)
    save_tensors(path, {n: t.data for n, t in params.named().items()}, meta)


def load_model(path) -> tuple[TransformerParams, TransformerConfig, dict]:
    arrays, meta = load_tensors(path)
    if meta.get("kind") != "transformer":
        raise CheckpointError(f"{path}: not a transformer checkpoint")
    config = TransformerConfig.from_dict(meta["config"])
    params = TransformerParams.init(config, seed=0)
    expected = set(params.named())
    got = set(arrays)
    if expected != got:
        raise CheckpointError(
            f"{path}: tensor set mismatch (missing {sorted(expected - got)}, "
            f"unexpected {sorted(got - expected)})"
        )
    for name, t in params.named().items():
        if arrays[name].shape != t.data.shape:
            raise CheckpointError(f"{path}: shape mismatch for {name}")
        t.data[...] = arrays[name]
    return params, config, meta


def body_bytes(path) -> bytes:
    """Concatenated raw bytes of every body-group tensor, in sorted-name
    order; used to assert stage-1 freezing on checkpoints."""
    arrays, meta = load_tensors(path)
    chunks = []
    for name in sorted(arrays):
        if name not in ("embedding", "projection"):
            chunks.append(np.asarray(arrays[name], dtype="<f4").tobytes())
    return b"".join(chunks)


def tensor_bytes(path, name: str) -> bytes:
    arrays, _ = load_tensors(path)
    if name not in arrays:
        raise CheckpointError(f"{path}: no tensor named {name!r}")
    return np.asarray(arrays[name], dtype="<f4").tobytes()
