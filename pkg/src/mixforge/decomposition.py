"""Trend and seasonality extraction so the regression sees only the residual.

A deliberately simple, deterministic decomposition: centered moving-average
trend (windows shrink symmetrically at the edges) plus per-phase seasonal
means re-centered to zero. The three components reconstruct the input
exactly by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DAILY, Dataset
from .errors import DimensionError, InsufficientDataError, ParameterError


def default_period(cadence: str) -> int:
    return 7 if cadence == DAILY else 52


def default_trend_window(period: int) -> int:
    return period if period % 2 == 1 else period + 1


@dataclass(frozen=True)
class Decomposition:
    """Additive split y = trend + seasonal + residual with period metadata."""

    trend: np.ndarray
    seasonal: np.ndarray
    residual: np.ndarray
    period: int

    def __post_init__(self):
        for name in ("trend", "seasonal", "residual"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        if not (self.trend.shape == self.seasonal.shape == self.residual.shape):
            raise DimensionError("component lengths disagree")

    @property
    def n_periods(self) -> int:
        return self.trend.shape[0]

    def reconstruct(self) -> np.ndarray:
        # same association as construction: residual was taken against the
        # rounded (trend + seasonal), so this is bit-exact
        return (self.trend + self.seasonal) + self.residual

    def extend_trend(self, horizon: int) -> np.ndarray:
        """Future trend: hold the last in-sample value flat."""
        return np.full(horizon, self.trend[-1])

    def extend_seasonal(self, horizon: int) -> np.ndarray:
        """Future seasonality: repeat the per-phase pattern periodically."""
        T = self.n_periods
        if not np.any(self.seasonal):
            return np.zeros(horizon)
        cycle = self.seasonal[: self.period]  # one full cycle; T >= 2*period here
        return cycle[np.arange(T, T + horizon) % self.period]

    def baseline_at(self, offsets) -> np.ndarray:
        """trend + seasonal at time offsets relative to the training start.

        In-sample offsets read the stored components; offsets at or beyond T
        use the flat-trend / repeated-seasonal extension.
        """
        offsets = np.asarray(offsets, dtype=int)
        out = np.empty(offsets.shape, dtype=float)
        T = self.n_periods
        inside = offsets < T
        out[inside] = self.trend[offsets[inside]] + self.seasonal[offsets[inside]]
        future = ~inside
        if np.any(future):
            rel = offsets[future]
            trend_part = np.full(rel.shape, self.trend[-1])
            if np.any(self.seasonal):
                seas_part = self.seasonal[: self.period][rel % self.period]
            else:
                seas_part = np.zeros(rel.shape)
            out[future] = trend_part + seas_part
        return out


def _linear_pad(y: np.ndarray, pad: int) -> np.ndarray:
    """Extend both ends with least-squares lines fit over the adjacent window."""
    T = y.shape[0]
    k = min(max(2 * pad + 1, 2), T)
    idx = np.arange(k, dtype=float)
    head_coef = np.polynomial.polynomial.polyfit(idx, y[:k], 1)
    tail_coef = np.polynomial.polynomial.polyfit(idx, y[T - k :], 1)
    head = np.polynomial.polynomial.polyval(np.arange(-pad, 0, dtype=float), head_coef)
    tail = np.polynomial.polynomial.polyval(np.arange(k, k + pad, dtype=float), tail_coef)
    return np.concatenate([head, y, tail])


def moving_average_trend(y: np.ndarray, window: int, period: int | None = None) -> np.ndarray:
    """Centered moving average with linear-extrapolation padding at the edges.

    Full-width windows everywhere: the series is extended on both sides by a
    least-squares line over the adjacent points, so a linear ramp is
    recovered exactly at the boundaries and the terminal trend value does not
    collapse onto single noisy observations. When `period` is even and
    window == period + 1, the classical half-weighted end kernel is used so a
    period-stationary seasonal is annihilated exactly.
    """
    T = y.shape[0]
    half = window // 2
    if half == 0:
        return y.astype(float).copy()
    if period is not None and period % 2 == 0 and window == period + 1:
        kernel = np.ones(window)
        kernel[0] = kernel[-1] = 0.5
    else:
        kernel = np.ones(window)
    kernel = kernel / kernel.sum()
    padded = _linear_pad(np.asarray(y, dtype=float), half)
    return np.convolve(padded, kernel, mode="valid")


def _phase_means(values: np.ndarray, period: int, offset: int = 0) -> np.ndarray:
    means = np.array([values[(k - offset) % period :: period].mean() for k in range(period)])
    return means - means.mean()


def decompose(y, period: int, trend_window: int | None = None) -> Decomposition:
    """Split a series into moving-average trend, per-phase seasonality, residual.

    Requires at least two full periods so every phase has two observations.
    Two passes: a first moving average seeds per-phase seasonal means, then
    the trend is re-estimated on the seasonally adjusted series so the
    shrinking edge windows are not biased by the seasonal cycle. The seasonal
    component is re-centered to mean zero, so it sums to ~0 over each full
    period, and trend + seasonal + residual reproduces y exactly.
    """
    y = np.asarray(y, dtype=float)
    if y.ndim != 1:
        raise ParameterError(f"series must be 1-D, got shape {y.shape}")
    T = y.shape[0]
    if period < 1:
        raise ParameterError(f"period must be >= 1, got {period}")
    if T < 2 * period:
        raise InsufficientDataError(
            f"need T >= 2*period = {2 * period} observations for per-phase means, got {T}"
        )
    if trend_window is None:
        trend_window = default_trend_window(period)
    if trend_window % 2 == 0 or trend_window < period:
        raise ParameterError(
            f"trend_window must be odd and >= period={period}, got {trend_window}"
        )
    first_pass = moving_average_trend(y, trend_window, period)
    # seed the seasonal from fully-windowed points only; the shrunken edge
    # windows do not cancel the cycle and would contaminate the phase means
    half = trend_window // 2
    if T - 2 * half >= period:
        interior = slice(half, T - half)
        seed_means = _phase_means((y - first_pass)[interior], period, offset=half)
    else:
        seed_means = _phase_means(y - first_pass, period)
    seasonal_seed = seed_means[np.arange(T) % period]
    trend = moving_average_trend(y - seasonal_seed, trend_window, period)
    seasonal = _phase_means(y - trend, period)[np.arange(T) % period]
    residual = _exact_residual(y, trend + seasonal)
    return Decomposition(trend=trend, seasonal=seasonal, residual=residual, period=period)


def _exact_residual(y: np.ndarray, base: np.ndarray) -> np.ndarray:
    """Residual r making (base + r) == y bit-exact wherever representable.

    Exactness is guaranteed whenever base lies within [y/2, 2y] (Sterbenz: the
    subtraction is then exact), which covers any sane decomposition of a
    nonnegative target. Outside that zone the residual is walked by ulps and
    may remain one ulp short when ulp(r) exceeds ulp(y).
    """
    residual = y - base
    for _ in range(8):
        defect = y - (base + residual)
        off = defect != 0
        if not np.any(off):
            break
        stepped = np.nextafter(
            residual[off], np.where(defect[off] > 0, np.inf, -np.inf)
        )
        new_defect = y[off] - (base[off] + stepped)
        improves = np.abs(new_defect) < np.abs(defect[off])
        if not np.any(improves):
            break
        idx = np.flatnonzero(off)[improves]
        residual[idx] = stepped[improves]
    return residual


def decompose_trend_only(y, period: int, trend_window: int | None = None) -> Decomposition:
    """Trend extraction with the seasonal component pinned to zero.

    Fallback for training windows shorter than two periods, where per-phase
    means are unavailable.
    """
    y = np.asarray(y, dtype=float)
    if trend_window is None:
        trend_window = default_trend_window(min(period, max(1, y.shape[0] // 2)))
    trend = moving_average_trend(y, trend_window)
    return Decomposition(
        trend=trend,
        seasonal=np.zeros_like(y),
        residual=_exact_residual(y, trend),
        period=period,
    )


def detrend(d: Dataset, dec: Decomposition) -> np.ndarray:
    """Residual target for the regression: y - (trend + seasonal)."""
    if dec.n_periods != d.n_periods:
        raise DimensionError(
            f"decomposition length {dec.n_periods} != dataset length {d.n_periods}"
        )
    return d.target - (dec.trend + dec.seasonal)
