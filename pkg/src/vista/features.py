"""Convolutional feature extraction from 32x32x3 correlation tensors.

The extractor runs a fixed ResNet-18-compatible graph (7x7/2 stem conv, 3x3/2
max pool, four stages of two basic blocks) whose normalization layers were
folded into convolution weights and biases at export time, so inference is
pure conv/add/relu.  Weights come either from a VSTW interchange file or from
a seeded deterministic generator for self-contained runs.

Per variable, the maps of the selected stages are concatenated after bilinear
upsampling to the shallowest stage's grid; the per-variable maps of a window
are then summed into one aggregated feature map.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from vista.core import ConfigError
from vista.nn import bilinear_resize, conv2d, maxpool2d, relu, xorshift_normal
from vista.tcm import Tcm32
from vista.weights import WeightFileError, read_weights

# (H, W, channels) per extractable stage for the fixed 32x32 input
LAYER_GEOMETRY = {2: (4, 4, 128), 3: (2, 2, 256), 4: (1, 1, 512)}

_STAGES = ((1, 64, 1), (2, 128, 2), (3, 256, 2), (4, 512, 2))  # (stage, channels, first stride)
_BLOCKS_PER_STAGE = 2


def resnet18_tensor_specs() -> list[tuple[str, tuple[int, ...]]]:
    """Declared tensor names and shapes, in graph order (norm layers folded)."""
    specs: list[tuple[str, tuple[int, ...]]] = [
        ("conv1.weight", (64, 3, 7, 7)),
        ("conv1.bias", (64,)),
    ]
    in_ch = 64
    for stage, out_ch, stride in _STAGES:
        for block in range(_BLOCKS_PER_STAGE):
            blk_in = in_ch if block == 0 else out_ch
            prefix = f"layer{stage}.{block}"
            specs += [
                (f"{prefix}.conv1.weight", (out_ch, blk_in, 3, 3)),
                (f"{prefix}.conv1.bias", (out_ch,)),
                (f"{prefix}.conv2.weight", (out_ch, out_ch, 3, 3)),
                (f"{prefix}.conv2.bias", (out_ch,)),
            ]
            if block == 0 and (stride != 1 or blk_in != out_ch):
                specs += [
                    (f"{prefix}.downsample.weight", (out_ch, blk_in, 1, 1)),
                    (f"{prefix}.downsample.bias", (out_ch,)),
                ]
        in_ch = out_ch
    return specs


@dataclass(frozen=True)
class SignalFeatureMap:
    """H x W grid of per-patch vectors for one variable of one window."""

    grid: np.ndarray  # (H, W, D)
    variable_index: int
    window_start: int = 0

    @property
    def dimension(self) -> int:
        return self.grid.shape[2]


@dataclass(frozen=True)
class AggregatedFeature:
    """Element-wise sum of a window's per-variable feature maps."""

    grid: np.ndarray  # (H, W, D)
    window_start: int

    @property
    def dimension(self) -> int:
        return self.grid.shape[2]


class FeatureExtractor:
    """Deterministic forward pass over the fixed convolutional graph."""

    def __init__(self, tensors: dict[str, np.ndarray], source: str) -> None:
        self.tensors = tensors
        self.source = source
        self.layer_geometry = dict(LAYER_GEOMETRY)
        self._validate()

    def _validate(self) -> None:
        expected = resnet18_tensor_specs()
        seen = set()
        for name, shape in expected:
            if name not in self.tensors:
                raise WeightFileError(f"{self.source}: missing tensor '{name}'")
            actual = tuple(self.tensors[name].shape)
            if actual != shape:
                raise WeightFileError(
                    f"{self.source}: tensor '{name}' has shape {actual}, declared contract is {shape}"
                )
            seen.add(name)
        extras = set(self.tensors) - seen
        if extras:
            raise WeightFileError(f"{self.source}: unexpected tensors {sorted(extras)[:4]}")

    def _block(self, x: np.ndarray, prefix: str, stride: int) -> np.ndarray:
        t = self.tensors
        out = relu(conv2d(x, t[f"{prefix}.conv1.weight"], t[f"{prefix}.conv1.bias"], stride, 1))
        out = conv2d(out, t[f"{prefix}.conv2.weight"], t[f"{prefix}.conv2.bias"], 1, 1)
        if f"{prefix}.downsample.weight" in t:
            shortcut = conv2d(x, t[f"{prefix}.downsample.weight"], t[f"{prefix}.downsample.bias"], stride, 0)
        else:
            shortcut = x
        return relu(out + shortcut)

    def forward(self, batch: np.ndarray, max_stage: int = 4) -> dict[int, np.ndarray]:
        """Run NCHW float input through the graph; returns stage -> (N,C,H,W)."""
        x = np.ascontiguousarray(batch, dtype=np.float32)
        if x.ndim != 4 or x.shape[1:] != (3, 32, 32):
            raise ConfigError(f"extractor input must be (N, 3, 32, 32), got {x.shape}")
        t = self.tensors
        x = maxpool2d(relu(conv2d(x, t["conv1.weight"], t["conv1.bias"], 2, 3)))
        maps: dict[int, np.ndarray] = {}
        for stage, _, stride in _STAGES:
            if stage > max_stage:
                break
            for block in range(_BLOCKS_PER_STAGE):
                x = self._block(x, f"layer{stage}.{block}", stride if block == 0 else 1)
            if stage >= 2:
                maps[stage] = x
        return maps


def seeded_tensors(seed: int) -> dict[str, np.ndarray]:
    """He-initialized weights from the xorshift generator; biases zero.

    Tensor k draws its values from stream k of the seed, scaled by
    sqrt(2 / fan_in); identical (seed -> weights) on every platform.
    """
    tensors: dict[str, np.ndarray] = {}
    for index, (name, shape) in enumerate(resnet18_tensor_specs()):
        if name.endswith(".bias"):
            tensors[name] = np.zeros(shape, dtype=np.float32)
            continue
        fan_in = int(np.prod(shape[1:]))
        values = xorshift_normal(seed, int(np.prod(shape)), stream=index) * np.sqrt(2.0 / fan_in)
        tensors[name] = values.reshape(shape).astype(np.float32)
    return tensors


def load_extractor(spec: str) -> FeatureExtractor:
    """Build an extractor from "seeded:<seed>" or from a VSTW file path."""
    if spec.startswith("seeded:"):
        try:
            seed = int(spec.split(":", 1)[1])
        except ValueError as exc:
            raise ConfigError(f"bad extractor spec {spec!r}: seed must be an integer") from exc
        return FeatureExtractor(seeded_tensors(seed), source=spec)
    return FeatureExtractor(read_weights(spec), source=spec)


def _check_layers(layers: tuple[int, ...]) -> tuple[int, ...]:
    layers = tuple(sorted(set(layers)))
    if not layers or any(l not in LAYER_GEOMETRY for l in layers):
        raise ConfigError(f"layer selection must be a non-empty subset of {{2,3,4}}, got {layers}")
    return layers


def selected_dimension(layers: tuple[int, ...]) -> int:
    return sum(LAYER_GEOMETRY[l][2] for l in _check_layers(layers))


def selected_grid(layers: tuple[int, ...]) -> tuple[int, int]:
    h, w, _ = LAYER_GEOMETRY[min(_check_layers(layers))]
    return h, w


def extract_feature_grids(
    batch: np.ndarray, extractor: FeatureExtractor, layers: tuple[int, ...]
) -> np.ndarray:
    """Feature grids (N, H, W, D) for a batch of (N, 3, 32, 32) tensors.

    Maps from stages deeper than the shallowest selected one are bilinearly
    upsampled to its grid before channel concatenation (ascending stage
    order).
    """
    layers = _check_layers(layers)
    maps = extractor.forward(batch, max_stage=max(layers))
    target_h, target_w = selected_grid(layers)
    parts = []
    for layer in layers:
        fmap = maps[layer]
        if fmap.shape[2:] != (target_h, target_w):
            fmap = bilinear_resize(fmap, target_h, target_w)
        parts.append(fmap)
    stacked = np.concatenate(parts, axis=1)  # (N, D, H, W)
    return np.ascontiguousarray(stacked.transpose(0, 2, 3, 1))


def extract_signal_features(
    tcm: Tcm32, extractor: FeatureExtractor, layers: tuple[int, ...] = (3, 4)
) -> SignalFeatureMap:
    """Feature map for a single variable's downsampled correlation tensor."""
    batch = tcm.tensor.transpose(2, 0, 1)[None]
    grid = extract_feature_grids(batch, extractor, layers)[0]
    return SignalFeatureMap(grid=grid, variable_index=tcm.variable_index, window_start=tcm.window_start)


def aggregate_variables(maps: list[SignalFeatureMap], C: int) -> AggregatedFeature:
    """Cell-wise vector sum across variables, in fixed left-to-right order."""
    if len(maps) != C:
        raise ConfigError(f"expected {C} signal feature maps, got {len(maps)}")
    shape = maps[0].grid.shape
    total = maps[0].grid.astype(np.float32).copy()
    for fmap in maps[1:]:
        if fmap.grid.shape != shape:
            raise ConfigError(
                f"variable {fmap.variable_index}: grid shape {fmap.grid.shape} does not match {shape}"
            )
        total += fmap.grid
    return AggregatedFeature(grid=total, window_start=maps[0].window_start)
