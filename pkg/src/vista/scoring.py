"""End-to-end fit and score pipelines.

Fit: window the training series, decompose, build correlation tensors,
extract and aggregate features, then coreset-subsample all patch vectors into
the memory bank.  Score: run the same feature path on test windows, rescale
each patch's nearest-bank distance, bilinear-upsample the patch grid to
window resolution, and sum over the vertical axis to get one score per
timestep.

Windows are processed independently; the decomposition stage parallelizes
across windows up to the VISTA_THREADS cap with results merged in window
order, so outputs are identical at any thread count.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from math import ceil

import numpy as np

from vista.core import ConfigError, PipelineConfig, TimeSeries, Window, segment_windows, zscore_series
from vista.features import (
    FeatureExtractor,
    extract_feature_grids,
    load_extractor,
    selected_dimension,
)
from vista.memory import MemoryBank, coreset_select, query_distances, rescale_batch
from vista.nn import bilinear_resize
from vista.stl import StlParams, stl_decompose
from vista.tcm import build_tcm, downsample_tcm

_FORWARD_BATCH = 128


@dataclass(frozen=True)
class AnomalyMap:
    """Patch-level scores for one window plus their upsampled field."""

    patch_scores: np.ndarray  # (H, W)
    upsampled: np.ndarray  # (w_s, w_s)


@dataclass(frozen=True)
class SeriesScores:
    """One anomaly score per test timestep.

    ``padded_mask`` flags timesteps whose window was right-padded (their
    scores exist but were influenced by replicated rows); downstream metrics
    exclude them by default.
    """

    s: np.ndarray
    padded_mask: np.ndarray


def _thread_count() -> int:
    raw = os.environ.get("VISTA_THREADS", "").strip()
    if raw:
        try:
            return max(1, int(raw))
        except ValueError as exc:
            raise ConfigError(f"VISTA_THREADS must be an integer, got {raw!r}") from exc
    return min(4, os.cpu_count() or 1)


def _window_tcm_stack(window: Window, cfg: PipelineConfig, params: StlParams) -> np.ndarray:
    """(C, 3, 32, 32) downsampled correlation tensors for one window."""
    decomposed = stl_decompose(window, params)
    out = np.empty((window.data.shape[1], 3, 32, 32), dtype=np.float64)
    for c in range(window.data.shape[1]):
        tcm = build_tcm(decomposed, c, cfg.component_selection, original=window.data)
        out[c] = downsample_tcm(tcm).tensor.transpose(2, 0, 1)
    return out


def window_feature_grids(
    windows: list[Window], cfg: PipelineConfig, extractor: FeatureExtractor
) -> np.ndarray:
    """(n_windows, H, W, D) aggregated feature grids, summed over variables."""
    if not windows:
        raise ConfigError("empty window set")
    params = StlParams.from_window(cfg.window_size, cfg.seasonal_ratio)
    n, C = len(windows), windows[0].data.shape[1]

    tcms = np.empty((n, C, 3, 32, 32), dtype=np.float64)
    workers = _thread_count()
    if workers > 1 and n > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for i, stack in enumerate(pool.map(lambda w: _window_tcm_stack(w, cfg, params), windows)):
                tcms[i] = stack
    else:
        for i, window in enumerate(windows):
            tcms[i] = _window_tcm_stack(window, cfg, params)

    flat = tcms.reshape(n * C, 3, 32, 32)
    grids = []
    for lo in range(0, flat.shape[0], _FORWARD_BATCH):
        grids.append(extract_feature_grids(flat[lo : lo + _FORWARD_BATCH], extractor, cfg.layer_selection))
    per_signal = np.concatenate(grids, axis=0)  # (n*C, H, W, D)
    h, w, d = per_signal.shape[1:]
    # fixed left-to-right variable order keeps the reduction reproducible
    return per_signal.reshape(n, C, h, w, d).sum(axis=1)


def collect_candidates(
    train: TimeSeries, cfg: PipelineConfig, extractor: FeatureExtractor
) -> np.ndarray:
    """All training patch vectors (N, D); fit always drops partial tails."""
    series = zscore_series(train) if cfg.normalize else train
    windows = segment_windows(series, cfg.window_size, "drop")
    grids = window_feature_grids(windows, cfg, extractor)
    return grids.reshape(-1, grids.shape[3])


def fit(
    train: TimeSeries, cfg: PipelineConfig, extractor: FeatureExtractor | None = None
) -> MemoryBank:
    """Build the memory bank from an unlabeled training series."""
    if extractor is None:
        extractor = load_extractor(cfg.extractor_spec)
    candidates = collect_candidates(train, cfg, extractor)
    k = ceil(cfg.coreset_ratio * candidates.shape[0])
    return coreset_select(candidates, k, cfg.seed, cfg.digest())


def _check_bank(bank: MemoryBank, cfg: PipelineConfig) -> None:
    if bank.config_digest != cfg.digest():
        raise ConfigError("bank built with different configuration")
    expected = selected_dimension(cfg.layer_selection)
    if bank.dimension != expected:
        raise ConfigError(
            f"bank dimension {bank.dimension} does not match layer selection (needs {expected})"
        )
    if not 1 <= cfg.knn_k <= bank.size:
        raise ConfigError(f"knn_k={cfg.knn_k} exceeds bank size {bank.size}")


def _patch_scores(grids: np.ndarray, bank: MemoryBank, k: int) -> np.ndarray:
    """(n_windows, H, W) rescaled nearest-neighbor scores per patch."""
    n, h, w, d = grids.shape
    dist = query_distances(grids.reshape(-1, d), bank)
    dist.sort(axis=1)
    return rescale_batch(dist[:, :k]).reshape(n, h, w)


def _per_timestep(patch_grid: np.ndarray, w_s: int) -> tuple[np.ndarray, np.ndarray]:
    """Upsample one window's patch grid and sum its vertical components."""
    upsampled = bilinear_resize(patch_grid, w_s, w_s)
    return upsampled, upsampled.sum(axis=0)


def score_window(
    window: Window, bank: MemoryBank, extractor: FeatureExtractor, cfg: PipelineConfig
) -> tuple[AnomalyMap, np.ndarray]:
    """Anomaly map and per-timestep scores (length w_s) for one window."""
    _check_bank(bank, cfg)
    grids = window_feature_grids([window], cfg, extractor)
    patch = _patch_scores(grids, bank, cfg.knn_k)[0]
    upsampled, timestep = _per_timestep(patch, cfg.window_size)
    return AnomalyMap(patch_scores=patch, upsampled=upsampled), timestep


def score_series(
    test: TimeSeries, bank: MemoryBank, extractor: FeatureExtractor, cfg: PipelineConfig
) -> SeriesScores:
    """Score every timestep of a series, stitching windows in order.

    The tail policy defaults to pad_repeat so every real timestep receives a
    score; scores computed inside a padded window keep their real positions
    and are flagged in the mask, and synthetic pad positions are dropped.
    """
    _check_bank(bank, cfg)
    series = zscore_series(test) if cfg.normalize else test
    windows = segment_windows(series, cfg.window_size, cfg.tail_policy)
    grids = window_feature_grids(windows, cfg, extractor)
    patches = _patch_scores(grids, bank, cfg.knn_k)

    s = np.zeros(test.T, dtype=np.float64)
    mask = np.zeros(test.T, dtype=bool)
    covered = np.zeros(test.T, dtype=bool)
    for window, patch in zip(windows, patches):
        _, timestep = _per_timestep(patch, cfg.window_size)
        real = window.padded_from if window.is_padded else cfg.window_size
        lo = window.start_index
        s[lo : lo + real] = timestep[:real]
        covered[lo : lo + real] = True
        if window.is_padded:
            mask[lo : lo + real] = True
    if cfg.tail_policy == "pad_repeat" and not covered.all():
        raise ConfigError("internal: pad_repeat left timesteps unscored")
    if cfg.tail_policy == "drop":
        # dropped tails receive no score; flag them so metrics skip them
        mask |= ~covered
    return SeriesScores(s=s, padded_mask=mask)


def predict(scores: SeriesScores, tau: float) -> np.ndarray:
    """Binary predictions via the strict rule s(t) > tau."""
    return (scores.s > tau).astype(np.int8)
