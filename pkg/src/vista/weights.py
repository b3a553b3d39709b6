"""Reader/writer for the VSTW weight interchange format.

Layout (little-endian): magic "VSTW", format version u32, tensor count u32;
then per tensor: name length u16, UTF-8 name, dtype tag u8 (0 = f32), rank
u8, dims u32 x rank, raw row-major f32 data.

A sidecar manifest at ``<path>.manifest`` (flat key-value text) carries the
producer's SHA-256 of the file plus the tensor table; when present, the
loader verifies the checksum before parsing.
"""

from __future__ import annotations

import struct
from hashlib import sha256
from pathlib import Path

import numpy as np

MAGIC = b"VSTW"
FORMAT_VERSION = 1
DTYPE_F32 = 0


class WeightFileError(ValueError):
    """Raised for unreadable, corrupt, or mismatching weight files."""


def write_weights(path: str | Path, tensors: dict[str, np.ndarray]) -> None:
    """Serialize named tensors in iteration order."""
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


def manifest_path(path: str | Path) -> Path:
    return Path(str(path) + ".manifest")


def write_manifest(path: str | Path, tensors: dict[str, np.ndarray]) -> str:
    """Write the sidecar manifest; returns the file checksum (hex)."""
    digest = sha256(Path(path).read_bytes()).hexdigest()
    lines = [f"checksum_sha256 = {digest}", f"tensor_count = {len(tensors)}"]
    lines += [
        f"tensor.{name} = {'x'.join(str(d) for d in tensor.shape)}" for name, tensor in tensors.items()
    ]
    manifest_path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    return digest


def _verify_manifest(path: Path, raw: bytes) -> None:
    sidecar = manifest_path(path)
    if not sidecar.exists():
        return
    recorded = None
    for line in sidecar.read_text(encoding="utf-8").splitlines():
        key, _, value = line.partition("=")
        if key.strip() == "checksum_sha256":
            recorded = value.strip()
            break
    if recorded is None:
        raise WeightFileError(f"{sidecar}: manifest has no checksum_sha256 entry")
    actual = sha256(raw).hexdigest()
    if actual != recorded:
        raise WeightFileError(
            f"{path}: checksum mismatch (manifest {recorded[:12]}.., file {actual[:12]}..)"
        )


def read_weights(path: str | Path, verify_checksum: bool = True) -> dict[str, np.ndarray]:
    """Parse a VSTW file into an ordered name -> float32 array mapping."""
    path = Path(path)
    if not path.exists():
        raise WeightFileError(f"weight file not found: {path}")
    raw = path.read_bytes()
    if verify_checksum:
        _verify_manifest(path, raw)
    if len(raw) < 12 or raw[:4] != MAGIC:
        raise WeightFileError(f"{path}: not a VSTW weight file (bad magic at offset 0)")
    version, count = struct.unpack_from("<II", raw, 4)
    if version != FORMAT_VERSION:
        raise WeightFileError(f"{path}: unsupported format version {version} at offset 4")

    tensors: dict[str, np.ndarray] = {}
    offset = 12
    for index in range(count):
        try:
            (name_len,) = struct.unpack_from("<H", raw, offset)
            offset += 2
            if len(raw) < offset + name_len:
                raise struct.error("tensor name out of bounds")
            name = raw[offset : offset + name_len].decode("utf-8")
            offset += name_len
            dtype_tag, rank = struct.unpack_from("<BB", raw, offset)
            offset += 2
            dims = struct.unpack_from(f"<{rank}I", raw, offset)
            offset += 4 * rank
        except (struct.error, UnicodeDecodeError) as exc:
            raise WeightFileError(
                f"{path}: corrupt tensor header #{index} at offset {offset}: {exc}"
            ) from exc
        if dtype_tag != DTYPE_F32:
            raise WeightFileError(f"{path}: tensor '{name}': unsupported dtype tag {dtype_tag}")
        size = 4 * int(np.prod(dims, dtype=np.int64))
        if len(raw) < offset + size:
            raise WeightFileError(
                f"{path}: tensor '{name}' truncated at offset {offset} "
                f"(need {size} bytes, have {len(raw) - offset})"
            )
        tensors[name] = np.frombuffer(raw, dtype="<f4", count=size // 4, offset=offset).reshape(dims)
        offset += size
    if offset != len(raw):
        raise WeightFileError(f"{path}: {len(raw) - offset} trailing bytes after tensor data")
    return tensors
