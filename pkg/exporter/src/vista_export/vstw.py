"""Writer for the VSTW interchange format (the consumer-side contract).

Layout (little-endian): magic "VSTW", format version u32, tensor count u32;
per tensor: name length u16, UTF-8 name, dtype tag u8 (0 = f32), rank u8,
dims u32 x rank, raw row-major f32 data.  A sidecar ``<path>.manifest``
carries the file's SHA-256 plus the tensor table.
"""

from __future__ import annotations

import struct
from hashlib import sha256
from pathlib import Path

import numpy as np

MAGIC = b"VSTW"
FORMAT_VERSION = 1
DTYPE_F32 = 0


def write_weights(path: str | Path, tensors: dict[str, np.ndarray]) -> None:
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<II", FORMAT_VERSION, len(tensors))
    for name, tensor in tensors.items():
        encoded = name.encode("utf-8")
        data = np.ascontiguousarray(tensor, dtype="<f4")
        blob += struct.pack("<H", len(encoded))
        blob += encoded
        blob += struct.pack("<BB", DTYPE_F32, data.ndim)
        blob += struct.pack(f"<{data.ndim}I", *data.shape)
        blob += data.tobytes()
    Path(path).write_bytes(bytes(blob))


def write_manifest(path: str | Path, tensors: dict[str, np.ndarray]) -> str:
    """Record the file checksum and tensor table; returns the checksum hex."""
    digest = sha256(Path(path).read_bytes()).hexdigest()
    lines = [f"checksum_sha256 = {digest}", f"tensor_count = {len(tensors)}"]
    lines += [
        f"tensor.{name} = {'x'.join(str(d) for d in tensor.shape)}"
        for name, tensor in tensors.items()
    ]
    Path(str(path) + ".manifest").write_text(
        "".join(line + "\n" for line in lines), encoding="utf-8"
    )
    return digest
