"""Bit-exact binary checkpoint container.

Layout (little-endian): magic ``MEGC``, format version u32, metadata length
u32 followed by that many bytes of UTF-8 JSON (config, seed, epoch,
validation F1-macro), parameter count u32, then per parameter: name length
u16 + UTF-8 name, rank u8, dims as u32s, values as 32-bit floats.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .errors import ContractError
from .io_utils import atomic_write_bytes
from .model import ConformerModel, ModelConfig, init_parameters

MAGIC = b"MEGC"
FORMAT_VERSION = 1


def checkpoint_bytes(model: ConformerModel, metadata: dict) -> bytes:
    meta = dict(metadata)
    meta["config"] = asdict(model.config)
    meta_json = json.dumps(meta, sort_keys=True).encode("utf-8")
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", FORMAT_VERSION))
    buf.write(struct.pack("<I", len(meta_json)))
    buf.write(meta_json)
    params = model.parameters()
    buf.write(struct.pack("<I", len(params)))
    for name, p in params:
        encoded = name.encode("utf-8")
        buf.write(struct.pack("<H", len(encoded)))
        buf.write(encoded)
        arr = np.ascontiguousarray(p.data, dtype="<f4")
        buf.write(struct.pack("<B", arr.ndim))
        for dim in arr.shape:
            buf.write(struct.pack("<I", dim))
        buf.write(arr.tobytes())
    return buf.getvalue()


def save_checkpoint(path: str | Path, model: ConformerModel, metadata: dict) -> None:
    atomic_write_bytes(path, checkpoint_bytes(model, metadata))


def load_checkpoint(path: str | Path, dtype=np.float32) -> tuple[ConformerModel, dict]:
    with open(path, "rb") as fh:
        raw = fh.read()
    return checkpoint_from_bytes(raw, dtype=dtype)


def checkpoint_from_bytes(raw: bytes, dtype=np.float32) -> tuple[ConformerModel, dict]:
    view = memoryview(raw)
    if bytes(view[:4]) != MAGIC:
        raise ContractError("not a checkpoint container (bad magic)")
    offset = 4
    version, = struct.unpack_from("<I", view, offset)
    offset += 4
    if version != FORMAT_VERSION:
        raise ContractError(f"unsupported checkpoint version {version}")
    meta_len, = struct.unpack_from("<I", view, offset)
    offset += 4
    metadata = json.loads(bytes(view[offset : offset + meta_len]).decode("utf-8"))
    offset += meta_len
    n_params, = struct.unpack_from("<I", view, offset)
    offset += 4
    arrays: dict[str, np.ndarray] = {}
    for _ in range(n_params):
        name_len, = struct.unpack_from("<H", view, offset)
        offset += 2
        name = bytes(view[offset : offset + name_len]).decode("utf-8")
        offset += name_len
        rank, = struct.unpack_from("<B", view, offset)
        offset += 1
        dims = struct.unpack_from(f"<{rank}I", view, offset)
        offset += 4 * rank
        count = int(np.prod(dims)) if rank else 1
        arr = np.frombuffer(view, dtype="<f4", count=count, offset=offset).reshape(dims)
        offset += 4 * count
        arrays[name] = arr.astype(dtype)
    config = ModelConfig(**metadata["config"])
    model = init_parameters(config, seed=0, dtype=dtype)
    model.load_arrays(arrays)
    return model, metadata
