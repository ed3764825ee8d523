"""Binary checkpoint serialization.

Layout (all integers little-endian):

    magic "C2BN" | u32 format version | u64 header length | header JSON
    | one block per array: u64 byte length + raw float64 data (C order)

The header records the model config, the schema fingerprint and the array
names/shapes in block order, so a load is self-contained and a save of a
loaded checkpoint is byte-identical.
"""

from __future__ import annotations

import io
import json
import struct
from pathlib import Path

import numpy as np

from .errors import CheckpointError
from .model import CHECKPOINT_FORMAT_VERSION, Checkpoint, ModelConfig

MAGIC = b"C2BN"


def checkpoint_bytes(ckpt: Checkpoint, manifest: dict | None = None) -> bytes:
    header = {
        "format_version": ckpt.format_version,
        "config": ckpt.config.to_dict(),
        "schema_fingerprint": ckpt.schema_fingerprint,
        "manifest": manifest or {},
        "params": [{"name": k, "shape": list(v.shape)} for k, v in ckpt.params.items()],
        "stats": [{"name": k, "shape": list(v.shape)} for k, v in ckpt.stats.items()],
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    out = io.BytesIO()
    out.write(MAGIC)
    out.write(struct.pack("<I", ckpt.format_version))
    out.write(struct.pack("<Q", len(head)))
    out.write(head)
    for arrays in (ckpt.params, ckpt.stats):
        for value in arrays.values():
            raw = np.ascontiguousarray(value, dtype="<f8").tobytes()
            out.write(struct.pack("<Q", len(raw)))
            out.write(raw)
    return out.getvalue()


def save_checkpoint(ckpt: Checkpoint, sink, manifest: dict | None = None) -> None:
    """Write to a path or a binary file object."""
    data = checkpoint_bytes(ckpt, manifest=manifest)
    if isinstance(sink, (str, Path)):
        Path(sink).write_bytes(data)
    else:
        sink.write(data)


def _read_exact(buf, n: int, what: str) -> bytes:
    data = buf.read(n)
    if len(data) != n:
        raise CheckpointError(f"truncated checkpoint: expected {n} bytes of {what}, "
                              f"got {len(data)}")
    return data


def load_checkpoint(source) -> Checkpoint:
    """Read from a path, bytes, or binary file object."""
    if isinstance(source, (str, Path)):
        buf = io.BytesIO(Path(source).read_bytes())
    elif isinstance(source, (bytes, bytearray)):
        buf = io.BytesIO(bytes(source))
    else:
        buf = source
    magic = _read_exact(buf, 4, "magic")
    if magic != MAGIC:
        raise CheckpointError(f"bad magic bytes {magic!r}; not a checkpoint file")
    (version,) = struct.unpack("<I", _read_exact(buf, 4, "version"))
    if version != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format version {version}, "
                              f"expected {CHECKPOINT_FORMAT_VERSION}")
    (head_len,) = struct.unpack("<Q", _read_exact(buf, 8, "header length"))
    try:
        header = json.loads(_read_exact(buf, head_len, "header"))
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"corrupt checkpoint header: {exc}") from exc
    config = ModelConfig.from_dict(header["config"])

    def read_blocks(entries) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for entry in entries:
            (nbytes,) = struct.unpack("<Q", _read_exact(buf, 8, "block length"))
            raw = _read_exact(buf, nbytes, f"block {entry['name']}")
            arr = np.frombuffer(raw, dtype="<f8").astype(np.float64)
            shape = tuple(entry["shape"])
            if arr.size != int(np.prod(shape)):
                raise CheckpointError(f"block {entry['name']} holds {arr.size} values, "
                                      f"expected shape {shape}")
            out[entry["name"]] = arr.reshape(shape)
        return out

    params = read_blocks(header["params"])
    stats = read_blocks(header["stats"])
    return Checkpoint(config=config, params=params, stats=stats,
                      schema_fingerprint=header["schema_fingerprint"],
                      format_version=version)
