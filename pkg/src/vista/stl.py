"""Seasonal-Trend decomposition using Loess, applied per window per variable.

The decomposition follows the classic inner loop: detrend, smooth each cycle
subseries (extended one full period beyond both ends), low-pass the result
with a triple moving average plus a Loess pass, deseasonalize, then smooth the
trend.  The residual is defined as the remainder, so trend + seasonal +
residual reconstructs the input exactly up to float addition error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from vista.core import ConfigError, Window, validate_window_size

PERIODIC = "periodic"


def _smallest_odd_at_least(v: float) -> int:
    k = int(math.ceil(v))
    return k if k % 2 == 1 else k + 1


@dataclass(frozen=True)
class StlParams:
    """Decomposition parameters.

    ``seasonal_span="periodic"`` replaces cycle-subseries smoothing with the
    (robustness-weighted) subseries mean, which makes the seasonal component
    exactly periodic within the window.  Span defaults follow the classic
    recipe; the trend-span formula uses the limit 1.5 * period for the
    periodic seasonal mode.
    """

    period: int
    seasonal_span: int | str = PERIODIC
    trend_span: int | None = None
    lowpass_span: int | None = None
    inner_iters: int = 2
    outer_iters: int = 0
    loess_degree: int = 1

    def __post_init__(self) -> None:
        if self.period < 2:
            raise ConfigError(f"period must be >= 2, got {self.period}")
        if self.seasonal_span != PERIODIC:
            ns = self.seasonal_span
            if not isinstance(ns, int) or ns < 3 or ns % 2 == 0:
                raise ConfigError(f"seasonal_span must be 'periodic' or an odd integer >= 3, got {ns!r}")
        if self.lowpass_span is None:
            object.__setattr__(self, "lowpass_span", _smallest_odd_at_least(self.period))
        if self.trend_span is None:
            if self.seasonal_span == PERIODIC:
                span = _smallest_odd_at_least(1.5 * self.period)
            else:
                span = _smallest_odd_at_least(1.5 * self.period / (1.0 - 1.5 / self.seasonal_span))
            object.__setattr__(self, "trend_span", span)
        for name in ("trend_span", "lowpass_span"):
            span = getattr(self, name)
            if span < 3 or span % 2 == 0:
                raise ConfigError(f"{name} must be an odd integer >= 3, got {span}")
        if self.inner_iters < 1:
            raise ConfigError(f"inner_iters must be >= 1, got {self.inner_iters}")
        if self.outer_iters < 0:
            raise ConfigError(f"outer_iters must be >= 0, got {self.outer_iters}")
        if self.loess_degree not in (0, 1):
            raise ConfigError(f"loess_degree must be 0 or 1, got {self.loess_degree}")

    @classmethod
    def from_window(cls, w_s: int, seasonal_ratio: float = 0.5, **overrides) -> "StlParams":
        """Derive the period as floor(seasonal_ratio * w_s)."""
        validate_window_size(w_s)
        if not 0.0 < seasonal_ratio < 1.0:
            raise ConfigError(f"seasonal_ratio must be in (0, 1), got {seasonal_ratio}")
        return cls(period=int(seasonal_ratio * w_s), **overrides)


@dataclass(frozen=True)
class DecomposedWindow:
    """Per-window trend/seasonal/residual triplet, each w_s x C."""

    trend: np.ndarray
    seasonal: np.ndarray
    residual: np.ndarray
    start_index: int = 0

    @property
    def w_s(self) -> int:
        return self.trend.shape[0]

    @property
    def C(self) -> int:
        return self.trend.shape[1]

    def reconstruction(self) -> np.ndarray:
        return self.trend + self.seasonal + self.residual


def _effective_span(span: int, n: int) -> int:
    """Clamp the span to the series length, keeping it a valid odd value."""
    q = min(int(span), n)
    if q % 2 == 0:
        q -= 1
    return max(q, 1)


def _fit_local(
    y: np.ndarray,
    pos: np.ndarray,
    eval_pos: float,
    weights: np.ndarray,
    degree: int,
    pos_range: float,
) -> float:
    """Weighted local fit over one neighborhood, evaluated at ``eval_pos``.

    Falls back to the (weighted or plain) local mean when the weighted
    position spread is too small for a stable slope estimate.
    """
    total = weights.sum()
    if total <= 0.0:
        return float(y.mean())
    w = weights / total
    ybar = float(w @ y)
    if degree == 0:
        return ybar
    xbar = float(w @ pos)
    centered = pos - xbar
    spread = float(w @ (centered * centered))
    if math.sqrt(max(spread, 0.0)) <= 1e-3 * pos_range:
        return ybar
    slope = float(w @ (centered * y)) / spread
    return ybar + slope * (eval_pos - xbar)


def _tricube(dist: np.ndarray, h: float) -> np.ndarray:
    u = dist / h
    w = np.zeros_like(u)
    inside = u < 1.0
    w[inside] = (1.0 - u[inside] ** 3) ** 3
    return w


def loess_smooth(
    x: np.ndarray,
    positions: np.ndarray | None = None,
    span: int = 7,
    degree: int = 1,
    robustness_weights: np.ndarray | None = None,
) -> np.ndarray:
    """Locally weighted polynomial smoother with tricube neighborhood weights.

    Fits a degree-0 or degree-1 polynomial over the ``span`` nearest
    neighbors of every position.  ``positions`` defaults to 0..n-1 and must be
    strictly increasing.  On uniformly spaced positions without robustness
    weights the interior reduces to one fixed symmetric kernel and is
    evaluated as a sliding dot product.
    """
    y = np.asarray(x, dtype=np.float64)
    n = y.shape[0]
    if n < 2:
        raise ValueError(f"loess needs at least 2 points, got {n}")
    if degree not in (0, 1):
        raise ConfigError(f"degree must be 0 or 1, got {degree}")
    if positions is None:
        pos = np.arange(n, dtype=np.float64)
        uniform = True
    else:
        pos = np.asarray(positions, dtype=np.float64)
        if pos.shape != y.shape:
            raise ValueError("positions must match x in length")
        steps = np.diff(pos)
        if not (steps > 0).all():
            raise ValueError("positions must be strictly increasing")
        uniform = bool(np.allclose(steps, steps[0], rtol=1e-12, atol=0.0))
    rw = None
    if robustness_weights is not None:
        rw = np.asarray(robustness_weights, dtype=np.float64)
        if rw.shape != y.shape:
            raise ValueError("robustness_weights must match x in length")

    q = _effective_span(span, n)
    if q == 1:
        return y.copy()
    pos_range = float(pos[-1] - pos[0])
    out = np.empty(n, dtype=np.float64)
    half = q // 2

    if uniform and rw is None:
        # interior points share one symmetric tricube kernel; the slope term
        # vanishes at the window center, so the fit is a weighted mean
        dist = np.abs(np.arange(q, dtype=np.float64) - half) * (pos[1] - pos[0])
        kernel = _tricube(dist, float(dist.max()))
        kernel /= kernel.sum()
        centers = np.lib.stride_tricks.sliding_window_view(y, q) @ kernel
        out[half : half + centers.shape[0]] = centers
        todo: list[tuple[int, int]] = [
            (i, min(max(i - half, 0), n - q))
            for i in range(n)
            if not half <= i < half + centers.shape[0]
        ]
    else:
        todo = []
        start = 0
        for i in range(n):
            # slide the contiguous window of the q nearest positions
            while start + q < n and pos[start + q] - pos[i] < pos[i] - pos[start]:
                start += 1
            todo.append((i, start))

    for i, lo in todo:
        seg_pos = pos[lo : lo + q]
        dist = np.abs(seg_pos - pos[i])
        h = float(dist.max())
        weights = _tricube(dist, h) if h > 0 else np.ones(q)
        if rw is not None:
            weights = weights * rw[lo : lo + q]
        out[i] = _fit_local(y[lo : lo + q], seg_pos, float(pos[i]), weights, degree, pos_range)
    return out


def _loess_with_extension(
    y: np.ndarray, span: int, degree: int, rw: np.ndarray | None
) -> tuple[float, np.ndarray, float]:
    """Loess over 0..k-1 plus extrapolated values at -1 and k (subseries use)."""
    k = y.shape[0]
    if k == 1:
        return float(y[0]), y.astype(np.float64).copy(), float(y[0])
    smoothed = loess_smooth(y, span=span, degree=degree, robustness_weights=rw)
    q = _effective_span(span, k)
    if q == 1:
        return float(smoothed[0]), smoothed, float(smoothed[-1])
    pos = np.arange(k, dtype=np.float64)
    edges = []
    for eval_pos, lo, hi in ((-1.0, 0, q), (float(k), k - q, k)):
        seg_pos = pos[lo:hi]
        dist = np.abs(seg_pos - eval_pos)
        weights = _tricube(dist, float(dist.max()))
        if rw is not None:
            weights = weights * rw[lo:hi]
        edges.append(_fit_local(y[lo:hi], seg_pos, eval_pos, weights, degree, float(k - 1)))
    return edges[0], smoothed, edges[1]


def _moving_average(v: np.ndarray, width: int) -> np.ndarray:
    csum = np.empty(v.shape[0] + 1, dtype=np.float64)
    csum[0] = 0.0
    np.cumsum(v, out=csum[1:])
    return (csum[width:] - csum[:-width]) / float(width)


def _lowpass(padded: np.ndarray, period: int, span: int, degree: int) -> np.ndarray:
    """Triple moving average (period, period, 3) followed by a Loess pass."""
    ma = _moving_average(_moving_average(_moving_average(padded, period), period), 3)
    return loess_smooth(ma, span=span, degree=degree)


def _cycle_subseries(
    detrended: np.ndarray, period: int, seasonal_span: int | str, degree: int, rw: np.ndarray | None
) -> np.ndarray:
    """Smooth each phase's subseries, extended one period beyond both ends.

    Returns the padded series of length n + 2 * period; padded index p maps to
    time p - period, so phases line up modulo the period.
    """
    n = detrended.shape[0]
    padded = np.empty(n + 2 * period, dtype=np.float64)
    for phase in range(period):
        sub = detrended[phase::period]
        sub_rw = rw[phase::period] if rw is not None else None
        if seasonal_span == PERIODIC:
            if sub_rw is not None and sub_rw.sum() > 0:
                value = float((sub * sub_rw).sum() / sub_rw.sum())
            else:
                value = float(sub.mean())
            padded[phase::period] = value
        else:
            before, smoothed, after = _loess_with_extension(sub, seasonal_span, degree, sub_rw)
            padded[phase::period] = np.concatenate(([before], smoothed, [after]))
    return padded


def _robustness_weights(residual: np.ndarray) -> np.ndarray:
    """Bisquare weights against 6 * median absolute residual."""
    dev = np.abs(residual)
    cutoff = 6.0 * float(np.median(dev))
    if cutoff <= 0.0:
        return np.ones_like(dev)
    u = dev / cutoff
    w = np.zeros_like(u)
    inside = u < 1.0
    w[inside] = (1.0 - u[inside] ** 2) ** 2
    return w


def _decompose_column(x: np.ndarray, params: StlParams) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n = x.shape[0]
    period = params.period
    trend = np.zeros(n, dtype=np.float64)
    seasonal = np.zeros(n, dtype=np.float64)
    rw: np.ndarray | None = None
    for outer in range(params.outer_iters + 1):
        for _ in range(params.inner_iters):
            detrended = x - trend
            padded = _cycle_subseries(detrended, period, params.seasonal_span, params.loess_degree, rw)
            low = _lowpass(padded, period, params.lowpass_span, params.loess_degree)
            seasonal = padded[period : period + n] - low
            trend = loess_smooth(
                x - seasonal,
                span=params.trend_span,
                degree=params.loess_degree,
                robustness_weights=rw,
            )
        if outer < params.outer_iters:
            rw = _robustness_weights(x - trend - seasonal)
    residual = x - trend - seasonal
    return trend, seasonal, residual


def stl_decompose(window: Window, params: StlParams) -> DecomposedWindow:
    """Decompose every variable of a window independently.

    Requires at least two full seasonal cycles per window (w_s >= 2 * period),
    which seasonal_ratio <= 0.5 guarantees.
    """
    data = window.data
    n = data.shape[0]
    if n < 2 * params.period:
        raise ConfigError(
            f"period: window of {n} points holds fewer than two cycles of period {params.period}"
        )
    trend = np.empty_like(data, dtype=np.float64)
    seasonal = np.empty_like(trend)
    residual = np.empty_like(trend)
    for c in range(data.shape[1]):
        trend[:, c], seasonal[:, c], residual[:, c] = _decompose_column(
            np.ascontiguousarray(data[:, c], dtype=np.float64), params
        )
    return DecomposedWindow(
        trend=trend, seasonal=seasonal, residual=residual, start_index=window.start_index
    )
