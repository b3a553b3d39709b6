"""Domain types, pipeline configuration, and windowing of raw series."""

from __future__ import annotations

from dataclasses import dataclass, replace
from hashlib import sha256
from pathlib import Path

import numpy as np

ALLOWED_WINDOW_SIZES = (32, 64, 128, 256, 512, 1024)
COMPONENTS = ("original", "trend", "seasonal", "residual")
TAIL_POLICIES = ("drop", "pad_repeat")


class ConfigError(ValueError):
    """Raised for invalid pipeline configuration or parameters."""


class DataError(ValueError):
    """Raised for malformed, inconsistent, or non-finite input data."""


@dataclass(frozen=True)
class TimeSeries:
    """A length-T, C-variable real-valued series with optional point labels.

    ``entity_starts`` records concatenation boundaries for multi-entity
    datasets (windows never straddle an entity boundary); it always includes
    offset 0.
    """

    values: np.ndarray
    labels: np.ndarray | None = None
    name: str = ""
    entity_starts: tuple[int, ...] = (0,)

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise DataError(f"series '{self.name}': values must be a T x C matrix, got shape {values.shape}")
        if not np.isfinite(values).all():
            bad = int(np.flatnonzero(~np.isfinite(values).all(axis=1))[0])
            raise DataError(f"series '{self.name}': non-finite value at timestep {bad}")
        object.__setattr__(self, "values", values)
        if self.labels is not None:
            labels = np.asarray(self.labels)
            if labels.shape != (values.shape[0],):
                raise DataError(
                    f"series '{self.name}': labels length {labels.shape} does not match T={values.shape[0]}"
                )
            if not np.isin(labels, (0, 1)).all():
                raise DataError(f"series '{self.name}': labels must be 0 or 1")
            object.__setattr__(self, "labels", labels.astype(np.int8))
        starts = tuple(sorted(set(int(s) for s in self.entity_starts) | {0}))
        if any(s < 0 or s >= values.shape[0] for s in starts):
            raise DataError(f"series '{self.name}': entity starts {starts} out of range")
        object.__setattr__(self, "entity_starts", starts)

    @property
    def T(self) -> int:
        return self.values.shape[0]

    @property
    def C(self) -> int:
        return self.values.shape[1]

    def entity_spans(self) -> list[tuple[int, int]]:
        """Half-open [start, end) spans of each concatenated entity."""
        bounds = list(self.entity_starts) + [self.T]
        return [(bounds[i], bounds[i + 1]) for i in range(len(bounds) - 1)]


@dataclass(frozen=True)
class Window:
    """A fixed-size, non-overlapping segment of a series.

    ``padded_from`` is the number of real rows when the tail was right-padded
    by repeating the last observed row, or ``None`` for fully real windows.
    """

    data: np.ndarray
    start_index: int
    padded_from: int | None = None

    @property
    def w_s(self) -> int:
        return self.data.shape[0]

    @property
    def is_padded(self) -> bool:
        return self.padded_from is not None


def _parse_int_set(text: str) -> tuple[int, ...]:
    return tuple(sorted(int(tok) for tok in text.replace(",", " ").split()))


def _parse_str_set(text: str) -> tuple[str, ...]:
    return tuple(tok for tok in text.replace(",", " ").split())


@dataclass(frozen=True)
class PipelineConfig:
    """Every knob of the fit/score pipeline.

    Defaults follow the standard grid: window sizes {32..1024}, coreset ratio
    0.1-0.9, kNN rescaling neighbors 5-15 (default 9, the midpoint).
    """

    window_size: int = 64
    seasonal_ratio: float = 0.5
    coreset_ratio: float = 0.5
    knn_k: int = 9
    layer_selection: tuple[int, ...] = (3, 4)
    component_selection: tuple[str, ...] = ("trend", "seasonal", "residual")
    tail_policy: str = "pad_repeat"
    extractor_spec: str = "seeded:0"
    seed: int = 0
    normalize: bool = False

    def __post_init__(self) -> None:
        if self.window_size not in ALLOWED_WINDOW_SIZES:
            raise ConfigError(
                f"window_size must be one of {list(ALLOWED_WINDOW_SIZES)}, got {self.window_size}"
            )
        if not 0.0 < self.seasonal_ratio < 1.0:
            raise ConfigError(f"seasonal_ratio must be in (0, 1), got {self.seasonal_ratio}")
        if not 0.0 < self.coreset_ratio <= 1.0:
            raise ConfigError(f"coreset_ratio must be in (0, 1], got {self.coreset_ratio}")
        if self.knn_k < 1:
            raise ConfigError(f"knn_k must be >= 1, got {self.knn_k}")
        layers = tuple(sorted(set(self.layer_selection)))
        if not layers or any(l not in (2, 3, 4) for l in layers):
            raise ConfigError(f"layer_selection must be a non-empty subset of {{2,3,4}}, got {self.layer_selection}")
        object.__setattr__(self, "layer_selection", layers)
        comps = tuple(c for c in COMPONENTS if c in set(self.component_selection))
        if not comps or len(comps) != len(set(self.component_selection)):
            raise ConfigError(
                f"component_selection must be a non-empty subset of {list(COMPONENTS)}, got {self.component_selection}"
            )
        if "original" in comps and "trend" in comps:
            # both map to channel 0 of the correlation tensor
            raise ConfigError("component_selection cannot include both 'original' and 'trend'")
        object.__setattr__(self, "component_selection", comps)
        if self.tail_policy not in TAIL_POLICIES:
            raise ConfigError(f"tail_policy must be one of {list(TAIL_POLICIES)}, got {self.tail_policy!r}")

    def digest(self) -> bytes:
        """SHA-256 over the canonical serialization; identifies a bank's build config."""
        return sha256(self.canonical().encode("utf-8")).digest()

    def canonical(self) -> str:
        return "\n".join(f"{key} = {value}" for key, value in sorted(self.to_dict().items()))

    def to_dict(self) -> dict[str, str]:
        return {
            "window_size": str(self.window_size),
            "seasonal_ratio": repr(float(self.seasonal_ratio)),
            "coreset_ratio": repr(float(self.coreset_ratio)),
            "knn_k": str(self.knn_k),
            "layer_selection": ",".join(str(l) for l in self.layer_selection),
            "component_selection": ",".join(self.component_selection),
            "tail_policy": self.tail_policy,
            "extractor_spec": self.extractor_spec,
            "seed": str(self.seed),
            "normalize": str(self.normalize).lower(),
        }

    @classmethod
    def from_dict(cls, raw: dict[str, str]) -> "PipelineConfig":
        known = {
            "window_size": int,
            "seasonal_ratio": float,
            "coreset_ratio": float,
            "knn_k": int,
            "layer_selection": _parse_int_set,
            "component_selection": _parse_str_set,
            "tail_policy": str,
            "extractor_spec": str,
            "seed": int,
            "normalize": lambda s: s.strip().lower() in ("1", "true", "yes", "on"),
        }
        kwargs = {}
        for key, value in raw.items():
            if key not in known:
                raise ConfigError(f"unknown configuration key '{key}'")
            try:
                kwargs[key] = known[key](value)
            except ConfigError:
                raise
            except ValueError as exc:
                raise ConfigError(f"bad value for '{key}': {value!r} ({exc})") from exc
        return cls(**kwargs)

    def override(self, **kwargs) -> "PipelineConfig":
        return replace(self, **kwargs)


def parse_kv_file(path: str | Path) -> dict[str, str]:
    """Parse a flat `key = value` text file (UTF-8, '#' comments, blank lines ok)."""
    out: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {stripped!r}")
        key, _, value = stripped.partition("=")
        out[key.strip()] = value.strip()
    return out


def write_kv_file(path: str | Path, entries: dict[str, str]) -> None:
    Path(path).write_text(
        "".join(f"{key} = {value}\n" for key, value in entries.items()), encoding="utf-8"
    )


def load_config(path: str | Path) -> PipelineConfig:
    return PipelineConfig.from_dict(parse_kv_file(path))


def validate_window_size(w_s: int) -> None:
    """Window invariants shared by segmentation and decomposition."""
    if w_s < 8 or w_s % 2 != 0:
        raise ConfigError(f"window size must be even and >= 8, got {w_s}")


def segment_windows(series: TimeSeries, w_s: int, tail_policy: str = "drop") -> list[Window]:
    """Tile the series into non-overlapping windows of size ``w_s``.

    Under ``drop`` the trailing ``T mod w_s`` points are discarded; under
    ``pad_repeat`` the final window is right-padded by repeating the last
    observed row and flagged as padded.  Multi-entity series are tiled per
    entity so no window straddles a boundary.
    """
    validate_window_size(w_s)
    if tail_policy not in TAIL_POLICIES:
        raise ConfigError(f"tail_policy must be one of {list(TAIL_POLICIES)}, got {tail_policy!r}")

    windows: list[Window] = []
    for start, end in series.entity_spans():
        length = end - start
        if length < w_s and tail_policy == "drop":
            raise DataError(
                f"series shorter than window: entity span has {length} points, window size {w_s}"
            )
        n_full = length // w_s
        for i in range(n_full):
            lo = start + i * w_s
            windows.append(Window(data=series.values[lo : lo + w_s], start_index=lo))
        tail = length - n_full * w_s
        if tail > 0 and tail_policy == "pad_repeat":
            lo = start + n_full * w_s
            real = series.values[lo:end]
            pad = np.repeat(real[-1:], w_s - tail, axis=0)
            windows.append(
                Window(data=np.concatenate([real, pad], axis=0), start_index=lo, padded_from=tail)
            )
    if not windows:
        raise DataError(f"series shorter than window: T={series.T}, window size {w_s}")
    return windows


def zscore_series(series: TimeSeries) -> TimeSeries:
    """Optional per-variable z-score (off by default: raw magnitudes are kept)."""
    std = series.values.std(axis=0)
    std[std == 0.0] = 1.0
    values = (series.values - series.values.mean(axis=0)) / std
    return TimeSeries(
        values=values, labels=series.labels, name=series.name, entity_starts=series.entity_starts
    )
