"""VISTA: training-free multivariate time-series anomaly detection.

Pipeline: fixed non-overlapping windows -> per-window STL decomposition ->
per-variable temporal correlation matrices -> pretrained/seeded CNN features ->
greedy-coreset memory bank -> rescaled nearest-neighbor anomaly scores.
"""

from vista.core import PipelineConfig, TimeSeries, Window, segment_windows
from vista.stl import DecomposedWindow, StlParams, loess_smooth, stl_decompose
from vista.tcm import (
    Tcm32,
    TemporalCorrelationMatrix,
    build_tcm,
    downsample_tcm,
    render_tcm_png,
)
from vista.features import (
    AggregatedFeature,
    FeatureExtractor,
    SignalFeatureMap,
    aggregate_variables,
    extract_signal_features,
    load_extractor,
)
from vista.memory import (
    MemoryBank,
    PatchFeature,
    coreset_select,
    load_bank,
    nearest_scores,
    rescale_score,
    save_bank,
)
from vista.scoring import AnomalyMap, SeriesScores, fit, predict, score_series, score_window
from vista.metrics import EvalReport, optimal_f1, roc_auc

__version__ = "0.1.0"

__all__ = [
    "AggregatedFeature",
    "AnomalyMap",
    "DecomposedWindow",
    "EvalReport",
    "FeatureExtractor",
    "MemoryBank",
    "PatchFeature",
    "PipelineConfig",
    "SeriesScores",
    "SignalFeatureMap",
    "StlParams",
    "Tcm32",
    "TemporalCorrelationMatrix",
    "TimeSeries",
    "Window",
    "aggregate_variables",
    "build_tcm",
    "coreset_select",
    "downsample_tcm",
    "extract_signal_features",
    "fit",
    "load_bank",
    "load_extractor",
    "loess_smooth",
    "nearest_scores",
    "optimal_f1",
    "predict",
    "render_tcm_png",
    "rescale_score",
    "roc_auc",
    "save_bank",
    "score_series",
    "score_window",
    "segment_windows",
    "stl_decompose",
]
