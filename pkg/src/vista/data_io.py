"""Dataset ingestion (CSV/NPY with manifest validation) and synthetic data.

Benchmark datasets are not redistributed: a manifest names the files, their
expected dimensions/lengths, and optional checksums, and the loader fails
loudly on any mismatch.  The synthetic generator produces labeled series with
spike, level-shift, and period-stretch anomalies for self-contained runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from hashlib import sha256
from pathlib import Path

import numpy as np

from vista.core import ConfigError, DataError, TimeSeries, parse_kv_file

ANOMALY_KINDS = ("spike", "level_shift", "period_stretch")


@dataclass(frozen=True)
class DatasetManifest:
    """Where a benchmark lives and what shape it must have."""

    name: str
    train_path: tuple[str, ...]
    test_path: tuple[str, ...]
    label_path: tuple[str, ...]
    format: str = "csv"
    expected_dims: int | None = None
    expected_counts: tuple[int, int] | None = None  # (train, test)
    columns: tuple[int, ...] | None = None
    checksums: dict[str, str] = field(default_factory=dict)

    @classmethod
    def load(cls, path: str | Path) -> "DatasetManifest":
        raw = parse_kv_file(path)
        base = Path(path).parent

        def paths(key: str) -> tuple[str, ...]:
            if key not in raw:
                raise ConfigError(f"{path}: manifest missing '{key}'")
            return tuple(str(base / p.strip()) for p in raw[key].split(",") if p.strip())

        fmt = raw.get("format", "csv").strip().lower()
        if fmt not in ("csv", "npy"):
            raise ConfigError(f"{path}: format must be csv or npy, got {fmt!r}")
        counts = None
        if "expected_train" in raw or "expected_test" in raw:
            try:
                counts = (int(raw["expected_train"]), int(raw["expected_test"]))
            except (KeyError, ValueError) as exc:
                raise ConfigError(f"{path}: expected_train/expected_test must both be integers") from exc
        columns = None
        if raw.get("columns", "").strip():
            columns = tuple(int(c) for c in raw["columns"].replace(",", " ").split())
        checksums = {
            key.removeprefix("sha256."): value
            for key, value in raw.items()
            if key.startswith("sha256.")
        }
        return cls(
            name=raw.get("name", Path(path).stem),
            train_path=paths("train_path"),
            test_path=paths("test_path"),
            label_path=paths("label_path"),
            format=fmt,
            expected_dims=int(raw["expected_dims"]) if raw.get("expected_dims") else None,
            expected_counts=counts,
            columns=columns,
            checksums=checksums,
        )


def _check_sum(path: Path, expected: str | None) -> None:
    if expected:
        actual = sha256(path.read_bytes()).hexdigest()
        if actual != expected:
            raise DataError(f"{path}: checksum mismatch (expected {expected[:12]}.., got {actual[:12]}..)")


def _read_matrix(path: Path, fmt: str) -> np.ndarray:
    if not path.exists():
        raise DataError(f"data file not found: {path}")
    if fmt == "npy":
        arr = np.load(path)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.ndim != 2:
            raise DataError(f"{path}: expected a 2-D T x C array, got ndim={arr.ndim}")
        return np.ascontiguousarray(arr, dtype=np.float64)
    with path.open("r", encoding="utf-8") as handle:
        first = handle.readline()
    skip = 0
    try:
        [float(tok) for tok in first.strip().split(",") if tok != ""]
    except ValueError:
        skip = 1  # header row
    arr = np.loadtxt(path, delimiter=",", skiprows=skip, ndmin=2, dtype=np.float64)
    return arr


def _read_labels(paths: tuple[str, ...]) -> np.ndarray:
    parts = []
    for p in paths:
        path = Path(p)
        if not path.exists():
            raise DataError(f"label file not found: {path}")
        if path.suffix == ".npy":
            values = np.load(path).reshape(-1).astype(np.float64)
        else:
            values = np.loadtxt(path, dtype=np.float64, ndmin=1)
        if values.ndim != 1:
            raise DataError(f"{path}: labels must be one value per line")
        parts.append(values)
    labels = np.concatenate(parts)
    if not np.isin(labels, (0.0, 1.0)).all():
        raise DataError(f"{paths[0]}: labels must be 0 or 1")
    return labels.astype(np.int8)


def _load_concat(paths: tuple[str, ...], manifest: DatasetManifest) -> tuple[np.ndarray, tuple[int, ...]]:
    blocks = []
    starts = []
    offset = 0
    for p in paths:
        path = Path(p)
        _check_sum(path, manifest.checksums.get(path.name))
        block = _read_matrix(path, manifest.format)
        if manifest.columns is not None:
            try:
                block = block[:, list(manifest.columns)]
            except IndexError as exc:
                raise DataError(f"{path}: column selection {manifest.columns} out of range") from exc
        starts.append(offset)
        offset += block.shape[0]
        blocks.append(block)
    values = np.concatenate(blocks, axis=0) if len(blocks) > 1 else blocks[0]
    return values, tuple(starts)


def load_series(manifest: DatasetManifest) -> tuple[TimeSeries, TimeSeries]:
    """Load (train, test-with-labels), validated against the manifest."""
    train_values, train_starts = _load_concat(manifest.train_path, manifest)
    test_values, test_starts = _load_concat(manifest.test_path, manifest)
    labels = _read_labels(manifest.label_path)

    if manifest.expected_dims is not None:
        for which, values in (("train", train_values), ("test", test_values)):
            if values.shape[1] != manifest.expected_dims:
                raise DataError(
                    f"{manifest.name}: {which} has {values.shape[1]} columns, "
                    f"manifest expects {manifest.expected_dims}"
                )
    if manifest.expected_counts is not None:
        want_train, want_test = manifest.expected_counts
        if train_values.shape[0] != want_train:
            raise DataError(
                f"{manifest.name}: train length {train_values.shape[0]}, manifest expects {want_train}"
            )
        if test_values.shape[0] != want_test:
            raise DataError(
                f"{manifest.name}: test length {test_values.shape[0]}, manifest expects {want_test}"
            )
    if labels.shape[0] != test_values.shape[0]:
        raise DataError(
            f"{manifest.name}: {labels.shape[0]} labels for {test_values.shape[0]} test points"
        )
    train = TimeSeries(values=train_values, name=f"{manifest.name}-train", entity_starts=train_starts)
    test = TimeSeries(
        values=test_values, labels=labels, name=f"{manifest.name}-test", entity_starts=test_starts
    )
    return train, test


def save_series_csv(series: TimeSeries, path: str | Path) -> None:
    """Full round-trip precision CSV (one timestep per row)."""
    np.savetxt(path, series.values, delimiter=",", fmt="%.17g")


def save_labels(labels: np.ndarray, path: str | Path) -> None:
    np.savetxt(path, np.asarray(labels, dtype=np.int8), fmt="%d")


@dataclass(frozen=True)
class SynthSpec:
    """Deterministic generator settings for one labeled series.

    Variables carry heterogeneous unit scales (loguniform over
    ``scale_range``), mirroring raw multivariate sensor data; anomaly
    magnitudes are defined in units of the affected variable's own noise
    level, so they scale along.
    """

    seed: int
    length: int
    dims: int
    anomaly_kinds: tuple[str, ...] = ANOMALY_KINDS
    contamination: float = 0.05
    window_hint: int = 64  # sizes level shifts to >= window_hint / 4 points
    noise_sigma: float = 0.15
    scale_range: tuple[float, float] = (0.1, 10.0)

    def __post_init__(self) -> None:
        if self.length < 16 or self.dims < 1:
            raise ConfigError(f"need length >= 16 and dims >= 1, got {self.length} x {self.dims}")
        unknown = set(self.anomaly_kinds) - set(ANOMALY_KINDS)
        if unknown:
            raise ConfigError(f"unknown anomaly kinds {sorted(unknown)}")
        if not 0.0 <= self.contamination <= 0.3:
            raise ConfigError(f"contamination must be in [0, 0.3], got {self.contamination}")
        lo, hi = self.scale_range
        if not 0.0 < lo <= hi:
            raise ConfigError(f"scale_range must satisfy 0 < lo <= hi, got {self.scale_range}")


def _inject_spike(values: np.ndarray, labels: np.ndarray, at: int, rng: np.random.Generator, sigma: float) -> None:
    var = int(rng.integers(values.shape[1]))
    amplitude = rng.uniform(6.0, 10.0) * sigma * (1 if rng.uniform() < 0.5 else -1)
    values[at, var] += amplitude
    labels[at] = 1


def _inject_level_shift(
    values: np.ndarray, labels: np.ndarray, lo: int, hi: int, rng: np.random.Generator, sigma: float
) -> None:
    var = int(rng.integers(values.shape[1]))
    step = 4.0 * sigma * (1 if rng.uniform() < 0.5 else -1)
    values[lo:hi, var] += step
    labels[lo:hi] = 1


def _inject_period_stretch(
    values: np.ndarray,
    labels: np.ndarray,
    lo: int,
    hi: int,
    rng: np.random.Generator,
    periods: np.ndarray,
    amplitudes: np.ndarray,
    phases: np.ndarray,
) -> None:
    """Slow the local oscillation; continuous at the interval start."""
    var = int(rng.integers(values.shape[1]))
    stretch = rng.uniform(1.6, 2.4)
    t = np.arange(lo, hi)
    base = amplitudes[var] * np.sin(2 * np.pi * t / periods[var] + phases[var])
    warped = lo + (t - lo) / stretch
    stretched = amplitudes[var] * np.sin(2 * np.pi * warped / periods[var] + phases[var])
    values[lo:hi, var] += stretched - base
    labels[lo:hi] = 1


@dataclass(frozen=True)
class _BaseProcess:
    """Shared structural parameters of one synthetic system."""

    periods: np.ndarray
    amplitudes: np.ndarray
    slopes: np.ndarray
    offsets: np.ndarray
    phases: np.ndarray
    scales: np.ndarray


def _draw_process(
    rng: np.random.Generator, C: int, T: int, scale_range: tuple[float, float] = (1.0, 1.0)
) -> _BaseProcess:
    lo, hi = scale_range
    return _BaseProcess(
        periods=rng.uniform(24.0, 96.0, size=C),
        amplitudes=rng.uniform(0.8, 1.6, size=C),
        slopes=rng.uniform(-0.5, 0.5, size=C) / T,
        offsets=rng.uniform(-1.0, 1.0, size=C),
        phases=rng.uniform(0.0, 2 * np.pi, size=C),
        scales=np.exp(rng.uniform(np.log(lo), np.log(hi), size=C)),
    )


def _clean_values(base: _BaseProcess, T: int, sigma: float, rng: np.random.Generator) -> np.ndarray:
    t = np.arange(T, dtype=np.float64)
    return (
        base.offsets
        + base.slopes * t[:, None]
        + base.amplitudes * np.sin(2 * np.pi * t[:, None] / base.periods + base.phases)
        + rng.normal(0.0, sigma, size=(T, base.periods.shape[0]))
    )


def _inject_anomalies(
    values: np.ndarray, labels: np.ndarray, spec: SynthSpec, base: _BaseProcess, rng: np.random.Generator
) -> None:
    T = values.shape[0]
    budget = int(round(spec.contamination * T))
    if budget > 0 and spec.anomaly_kinds:
        min_seg = max(4, spec.window_hint // 4)
        guard = 2  # clean points kept between anomalies
        cursor = int(rng.integers(0, min_seg))
        while budget > 0 and cursor < T - 1:
            # interval kinds need at least min_seg points of remaining budget
            eligible = [k for k in spec.anomaly_kinds if k == "spike" or budget >= min_seg]
            if not eligible:
                break
            kind = eligible[int(rng.integers(len(eligible)))]
            if kind == "spike":
                _inject_spike(values, labels, cursor, rng, spec.noise_sigma)
                used = 1
            else:
                seg = int(rng.integers(min_seg, min(2 * min_seg, budget) + 1))
                hi = min(cursor + seg, T)
                if kind == "level_shift":
                    _inject_level_shift(values, labels, cursor, hi, rng, spec.noise_sigma)
                else:
                    _inject_period_stretch(
                        values, labels, cursor, hi, rng, base.periods, base.amplitudes, base.phases
                    )
                used = hi - cursor
            budget -= used
            pace = (T - cursor) // max(budget, 1) if budget else T
            gap = int(rng.integers(guard, max(guard + 1, pace)))
            cursor += used + gap


def synth_generate(spec: SynthSpec) -> TimeSeries:
    """One labeled series: linear trend + per-variable sinusoid + Gaussian
    noise, with anomalies injected to hit the contamination budget."""
    rng = np.random.default_rng(spec.seed)
    base = _draw_process(rng, spec.dims, spec.length, spec.scale_range)
    values = _clean_values(base, spec.length, spec.noise_sigma, rng)
    labels = np.zeros(spec.length, dtype=np.int8)
    _inject_anomalies(values, labels, spec, base, rng)
    return TimeSeries(values=values * base.scales, labels=labels, name=f"synth-{spec.seed}")


def synth_pair(spec: SynthSpec) -> tuple[TimeSeries, TimeSeries]:
    """(clean train, contaminated test) drawn from one shared base process.

    The two series differ only in their noise realization and in the injected
    test anomalies, mirroring a fit-on-normal / score-on-anomalous split.
    """
    rng = np.random.default_rng(spec.seed)
    base = _draw_process(rng, spec.dims, spec.length, spec.scale_range)
    train_values = _clean_values(base, spec.length, spec.noise_sigma, rng)
    test_values = _clean_values(base, spec.length, spec.noise_sigma, rng)
    labels = np.zeros(spec.length, dtype=np.int8)
    _inject_anomalies(test_values, labels, spec, base, rng)
    train = TimeSeries(values=train_values * base.scales, name=f"synth-{spec.seed}-train")
    test = TimeSeries(
        values=test_values * base.scales, labels=labels, name=f"synth-{spec.seed}-test"
    )
    return train, test
