"""Minimal CNN inference ops: conv2d, maxpool, relu, bilinear resize, RNG.

Everything operates on float32 NCHW arrays.  Convolutions run as im2col plus
one GEMM, which keeps per-output-element summation order fixed and the whole
forward pass deterministic.  The xorshift generator provides portable seeded
weights independent of any external RNG implementation.
"""

from __future__ import annotations

import numpy as np

_LANES = 1024


def _splitmix64(x: np.ndarray) -> np.ndarray:
    z = x + np.uint64(0x9E3779B97F4A7C15)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def _xorshift_step(state: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """One xorshift64* update per lane; returns (new state, output words)."""
    x = state.copy()
    x ^= x >> np.uint64(12)
    x ^= x << np.uint64(25)
    x ^= x >> np.uint64(27)
    return x, x * np.uint64(0x2545F4914F6CDD1D)


def xorshift_uniform(seed: int, count: int, stream: int = 0) -> np.ndarray:
    """``count`` floats in (0, 1] from lane-parallel xorshift64* streams.

    Lane l of stream s is seeded with splitmix64(seed, s, l); value i comes
    from lane i mod LANES at step i div LANES.  Fully determined by
    (seed, count, stream) and independent of platform RNGs.
    """
    with np.errstate(over="ignore"):  # uint64 wraparound is the point
        base = _splitmix64(
            np.full(1, (int(seed) & 0xFFFFFFFFFFFFFFFF), dtype=np.uint64) + np.uint64(stream)
        )
        state = _splitmix64(base + np.arange(_LANES, dtype=np.uint64))
        steps = (count + _LANES - 1) // _LANES
        words = np.empty((steps, _LANES), dtype=np.uint64)
        for row in range(steps):
            state, words[row] = _xorshift_step(state)
    bits = words.reshape(-1)[:count]
    return ((bits >> np.uint64(11)).astype(np.float64) + 1.0) / float(1 << 53)


def xorshift_normal(seed: int, count: int, stream: int = 0) -> np.ndarray:
    """Standard normals via Box-Muller over two xorshift uniform substreams."""
    pairs = (count + 1) // 2
    u1 = xorshift_uniform(seed, pairs, stream=2 * stream)
    u2 = xorshift_uniform(seed, pairs, stream=2 * stream + 1)
    radius = np.sqrt(-2.0 * np.log(u1))
    angle = 2.0 * np.pi * u2
    return np.concatenate([radius * np.cos(angle), radius * np.sin(angle)])[:count]


def conv2d(x: np.ndarray, weight: np.ndarray, bias: np.ndarray, stride: int, padding: int) -> np.ndarray:
    """Cross-correlation of NCHW input with OIHW weights plus per-channel bias."""
    n, c_in, h, w = x.shape
    c_out, c_in_w, kh, kw = weight.shape
    if c_in != c_in_w:
        raise ValueError(f"input has {c_in} channels, weights expect {c_in_w}")
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    h_out = (h + 2 * padding - kh) // stride + 1
    w_out = (w + 2 * padding - kw) // stride + 1

    cols = np.empty((n, c_in, kh, kw, h_out, w_out), dtype=np.float32)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = x[:, :, i : i + h_out * stride : stride, j : j + w_out * stride : stride]
    flat = cols.transpose(0, 4, 5, 1, 2, 3).reshape(n * h_out * w_out, c_in * kh * kw)
    out = flat @ weight.reshape(c_out, -1).T.astype(np.float32)
    out += bias.astype(np.float32)
    return out.reshape(n, h_out, w_out, c_out).transpose(0, 3, 1, 2)


def maxpool2d(x: np.ndarray, kernel: int = 3, stride: int = 2, padding: int = 1) -> np.ndarray:
    n, c, h, w = x.shape
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)), constant_values=-np.inf)
    h_out = (h + 2 * padding - kernel) // stride + 1
    w_out = (w + 2 * padding - kernel) // stride + 1
    out = np.full((n, c, h_out, w_out), -np.inf, dtype=np.float32)
    for i in range(kernel):
        for j in range(kernel):
            np.maximum(out, x[:, :, i : i + h_out * stride : stride, j : j + w_out * stride : stride], out=out)
    return out


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def bilinear_resize(array: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize of the trailing two axes, half-pixel centers, no corner
    alignment (coordinates clamp at the edges)."""

    def axis_coords(n_in: int, n_out: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        coords = np.clip((np.arange(n_out) + 0.5) * n_in / n_out - 0.5, 0.0, n_in - 1.0)
        lo = np.floor(coords).astype(int)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, (coords - lo).astype(array.dtype)

    h, w = array.shape[-2], array.shape[-1]
    rlo, rhi, rfrac = axis_coords(h, out_h)
    clo, chi, cfrac = axis_coords(w, out_w)
    rows = array[..., rlo, :] * (1 - rfrac)[:, None] + array[..., rhi, :] * rfrac[:, None]
    return rows[..., :, clo] * (1 - cfrac) + rows[..., :, chi] * cfrac
