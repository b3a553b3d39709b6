"""Memory bank: greedy-coreset subsampling, persistence, and nearest-neighbor queries.

The bank holds a minimax-covering subset of all training patch vectors,
selected by the classic farthest-point greedy rule.  Queries are exact
Euclidean nearest-neighbor scans; the raw nearest distance is rescaled by a
softmax-style density factor over the K nearest bank vectors so that queries
landing in sparse bank regions score higher.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

BANK_MAGIC = b"VSTB"
BANK_VERSION = 1


class BankError(ValueError):
    """Raised for invalid bank parameters or unreadable bank files."""


@dataclass(frozen=True)
class PatchFeature:
    """One aggregated patch vector with its pipeline provenance."""

    vector: np.ndarray
    window_index: int
    patch_row: int
    patch_col: int


@dataclass(frozen=True)
class MemoryBank:
    """Coreset-subsampled patch vectors plus the config that built them."""

    vectors: np.ndarray  # (K_B, D) float32
    config_digest: bytes = b"\x00" * 32
    rng_seed: int = 0
    selected_indices: tuple[int, ...] = ()

    @property
    def size(self) -> int:
        return self.vectors.shape[0]

    @property
    def dimension(self) -> int:
        return self.vectors.shape[1]


def greedy_coreset_indices(candidates: np.ndarray, k: int, seed: int) -> list[int]:
    """Indices of the farthest-point greedy selection.

    Starts from one seeded-uniform-random candidate, then repeatedly adds the
    candidate farthest from the current selection, maintaining an incremental
    min-distance cache (O(N) per round).  Distance ties break toward the
    lowest candidate index.
    """
    n = candidates.shape[0]
    if not 1 <= k <= n:
        raise BankError(f"coreset size must be in [1, {n}], got {k}")
    data = np.ascontiguousarray(candidates, dtype=np.float64)
    first = int(np.random.default_rng(seed).integers(n))
    chosen = [first]
    min_dist = np.linalg.norm(data - data[first], axis=1)
    for _ in range(k - 1):
        nxt = int(np.argmax(min_dist))  # argmax returns the lowest tied index
        chosen.append(nxt)
        np.minimum(min_dist, np.linalg.norm(data - data[nxt], axis=1), out=min_dist)
    return chosen


def coreset_select(
    candidates: np.ndarray, k: int, seed: int, config_digest: bytes = b"\x00" * 32
) -> MemoryBank:
    """Greedy k-center subsample of the N x D candidate matrix."""
    indices = greedy_coreset_indices(candidates, k, seed)
    return MemoryBank(
        vectors=np.ascontiguousarray(candidates[indices], dtype=np.float32),
        config_digest=config_digest,
        rng_seed=seed,
        selected_indices=tuple(indices),
    )


def save_bank(bank: MemoryBank, path: str | Path) -> None:
    blob = bytearray()
    blob += BANK_MAGIC
    blob += struct.pack("<II", BANK_VERSION, bank.dimension)
    blob += struct.pack("<QQ", bank.size, bank.rng_seed & 0xFFFFFFFFFFFFFFFF)
    digest = bank.config_digest
    if len(digest) != 32:
        raise BankError(f"config digest must be 32 bytes, got {len(digest)}")
    blob += digest
    blob += np.ascontiguousarray(bank.vectors, dtype="<f4").tobytes()
    Path(path).write_bytes(bytes(blob))


def load_bank(path: str | Path) -> MemoryBank:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 4 or raw[:4] != BANK_MAGIC:
        raise BankError(f"{path}: not a VISTA bank (bad magic at offset 0)")
    header = struct.calcsize("<II") + 4 + struct.calcsize("<QQ") + 32
    if len(raw) < header:
        raise BankError(f"{path}: truncated header, {len(raw)} bytes (offset {len(raw)})")
    version, dim = struct.unpack_from("<II", raw, 4)
    if version != BANK_VERSION:
        raise BankError(f"{path}: unsupported bank version {version} at offset 4")
    size, seed = struct.unpack_from("<QQ", raw, 12)
    digest = raw[28:60]
    payload = raw[60:]
    expected = 4 * size * dim
    if len(payload) != expected:
        raise BankError(
            f"{path}: payload truncated at offset {60 + len(payload)}: "
            f"declared {size} x {dim} f32 needs {expected} bytes, have {len(payload)}"
        )
    if size < 1 or dim < 1:
        raise BankError(f"{path}: empty bank ({size} x {dim})")
    vectors = np.frombuffer(payload, dtype="<f4").reshape(size, dim)
    return MemoryBank(vectors=vectors, config_digest=digest, rng_seed=int(seed))


def nearest_scores(
    query: np.ndarray, bank: MemoryBank, k: int
) -> tuple[float, np.ndarray, np.ndarray]:
    """Exact nearest-neighbor scan for one query vector.

    Returns (s_star, distances, neighbor_vectors): the K smallest query-bank
    Euclidean distances ascending (s_star is the first) with the matching bank
    rows.  Ties order by bank index.
    """
    if bank.size < 1:
        raise BankError("empty memory bank")
    if not 1 <= k <= bank.size:
        raise BankError(f"k must be in [1, {bank.size}], got {k}")
    dist = query_distances(np.asarray(query, dtype=np.float64)[None], bank)[0]
    order = np.argsort(dist, kind="stable")[:k]
    return float(dist[order[0]]), dist[order], bank.vectors[order]


_DISTANCE_CHUNK_BYTES = 256 << 20


def query_distances(queries: np.ndarray, bank: MemoryBank) -> np.ndarray:
    """(B, K_B) Euclidean distances, by direct differences (chunked over B).

    Spelled as sqrt(sum of squared differences) so results match a plain
    linear-scan oracle bit for bit.
    """
    q = np.asarray(queries, dtype=np.float64)
    base = bank.vectors.astype(np.float64)
    out = np.empty((q.shape[0], base.shape[0]), dtype=np.float64)
    chunk = max(1, _DISTANCE_CHUNK_BYTES // (8 * base.shape[0] * max(base.shape[1], 1)))
    for lo in range(0, q.shape[0], chunk):
        diff = q[lo : lo + chunk, None, :] - base[None, :, :]
        out[lo : lo + chunk] = np.sqrt(np.square(diff).sum(axis=-1))
    return out


def rescale_score(s_star: float, neighbor_distances: np.ndarray) -> float:
    """Density-aware rescaling of the nearest distance.

    factor = 1 - exp(d0) / sum_k exp(d_k) over the K nearest distances,
    evaluated with the max distance subtracted inside the exponentials (the
    ratio is shift-invariant).  With K = 1 the factor degenerates to 0.
    """
    d = np.asarray(neighbor_distances, dtype=np.float64)
    if d.ndim != 1 or d.size < 1:
        raise BankError("neighbor_distances must be a non-empty 1-D array")
    if abs(float(d[0]) - s_star) > 1e-9 * max(1.0, abs(s_star)):
        raise BankError("neighbor_distances[0] must equal s_star")
    shifted = d - d.max()
    factor = 1.0 - float(np.exp(shifted[0]) / np.exp(shifted).sum())
    return factor * s_star


def rescale_batch(distances: np.ndarray) -> np.ndarray:
    """Vectorized rescaling for a (B, K) ascending-distance matrix."""
    shifted = distances - distances.max(axis=1, keepdims=True)
    weights = np.exp(shifted)
    factor = 1.0 - weights[:, 0] / weights.sum(axis=1)
    return factor * distances[:, 0]
