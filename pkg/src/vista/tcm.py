"""Temporal correlation matrices: outer-product self-similarity per variable.

Each selected component column v becomes the Gram channel v v^T, stacking
trend/seasonal/residual as channels 0/1/2 ("original" takes channel 0).
Values stay raw: no normalization, so component magnitudes survive into the
feature extractor.  Display scaling happens only in the PNG renderer.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from vista.core import COMPONENTS, ConfigError
from vista.nn import bilinear_resize
from vista.stl import DecomposedWindow

TCM_SIZE = 32

# channel slot per component; "original" replaces the trend slot
_CHANNEL_SLOT = {"original": 0, "trend": 0, "seasonal": 1, "residual": 2}


@dataclass(frozen=True)
class TemporalCorrelationMatrix:
    """Full-resolution w_s x w_s x 3 self-similarity tensor for one variable."""

    channels: np.ndarray
    variable_index: int
    window_start: int

    @property
    def w_s(self) -> int:
        return self.channels.shape[1]


@dataclass(frozen=True)
class Tcm32:
    """Area-averaged 32 x 32 x 3 tensor (channel-last), the extractor input."""

    tensor: np.ndarray
    variable_index: int
    window_start: int


def build_tcm(
    decomposed: DecomposedWindow,
    variable: int,
    components: tuple[str, ...] = ("trend", "seasonal", "residual"),
    original: np.ndarray | None = None,
) -> TemporalCorrelationMatrix:
    """Outer products of the selected component columns; missing channels zero.

    ``original`` supplies the raw window column and is required only when the
    selection includes "original".
    """
    if not components:
        raise ConfigError("component selection must be non-empty")
    unknown = set(components) - set(COMPONENTS)
    if unknown:
        raise ConfigError(f"unknown components {sorted(unknown)}")
    if not 0 <= variable < decomposed.C:
        raise ConfigError(f"variable index {variable} out of range for C={decomposed.C}")

    w_s = decomposed.w_s
    channels = np.zeros((3, w_s, w_s), dtype=np.float64)
    sources = {
        "trend": decomposed.trend,
        "seasonal": decomposed.seasonal,
        "residual": decomposed.residual,
    }
    for comp in components:
        if comp == "original":
            if original is None:
                raise ConfigError("component 'original' requires the raw window data")
            v = np.asarray(original, dtype=np.float64)
            if v.ndim == 2:
                v = v[:, variable]
        else:
            v = sources[comp][:, variable]
        channels[_CHANNEL_SLOT[comp]] = np.outer(v, v)
    return TemporalCorrelationMatrix(
        channels=channels,
        variable_index=variable,
        window_start=decomposed.start_index,
    )


def _area_average(channel: np.ndarray, out_size: int) -> np.ndarray:
    n = channel.shape[0]
    block = n // out_size
    return channel.reshape(out_size, block, out_size, block).mean(axis=(1, 3))


def downsample_tcm(matrix: TemporalCorrelationMatrix) -> Tcm32:
    """Resize every channel to 32 x 32 by area averaging (identity at 32)."""
    w_s = matrix.w_s
    if w_s < TCM_SIZE:
        raise ConfigError(f"window size {w_s} is below the {TCM_SIZE}-point minimum")
    if w_s == TCM_SIZE:
        tensor = matrix.channels.copy()
    elif w_s % TCM_SIZE == 0:
        tensor = np.stack([_area_average(ch, TCM_SIZE) for ch in matrix.channels])
    else:
        tensor = bilinear_resize(matrix.channels.astype(np.float64), TCM_SIZE, TCM_SIZE)
    return Tcm32(
        tensor=np.ascontiguousarray(tensor.transpose(1, 2, 0)),
        variable_index=matrix.variable_index,
        window_start=matrix.window_start,
    )


def render_tcm_png(matrix: TemporalCorrelationMatrix | Tcm32, path: str | Path) -> None:
    """Write an 8-bit RGB PNG, each channel affine-mapped to [0, 255].

    Display only: the detection path never sees this scaling.  R/G/B carry
    trend/seasonal/residual.
    """
    if isinstance(matrix, TemporalCorrelationMatrix):
        channels = matrix.channels
    else:
        channels = matrix.tensor.transpose(2, 0, 1)
    rgb = np.zeros(channels.shape[1:] + (3,), dtype=np.uint8)
    for k in range(3):
        ch = channels[k]
        lo, hi = float(ch.min()), float(ch.max())
        if hi > lo:
            rgb[:, :, k] = np.round((ch - lo) / (hi - lo) * 255.0).astype(np.uint8)
    try:
        Image.fromarray(rgb, mode="RGB").save(Path(path), format="PNG")
    except OSError as exc:
        raise OSError(f"cannot write PNG to {path}: {exc}") from exc
