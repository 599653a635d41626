"""Synthetic spend/performance generator with known ground truth.

Produces the weekly two-channel experiment used throughout the test suite:
one slow-moving, block-spending channel (television-like, long carryover)
and one spiky channel (search-like, short carryover). The exact per-channel
contribution series are returned so attribution can be checked against truth.
"""

from __future__ import annotations

import datetime as dt
import json
from dataclasses import asdict, dataclass

import numpy as np

from .core import WEEKLY, Dataset
from .errors import ParameterError
from .transforms import AdstockParams, adstock_matrix

DEFAULT_LEVEL = 10_000.0  # raw target units per unit of model-space signal


@dataclass(frozen=True)
class TrendSpec:
    """Gentle linear drift plus a logistic bend, in model-space units."""

    base: float = 0.4
    slope: float = 0.3
    bend: float = 0.25
    bend_center: float = 0.35  # fraction of the horizon
    bend_width: float = 0.08  # fraction of the horizon

    def evaluate(self, T: int) -> np.ndarray:
        t = np.arange(T)
        linear = self.base + self.slope * t / max(T - 1, 1)
        center = self.bend_center * T
        width = max(self.bend_width * T, 1e-9)
        return linear + self.bend / (1.0 + np.exp(-(t - center) / width))


@dataclass(frozen=True)
class SeasonalSpec:
    """Single sinusoid, yearly by default for weekly data."""

    amplitude: float = 0.05
    period: int = 52
    phase: float = 0.0

    def evaluate(self, T: int) -> np.ndarray:
        t = np.arange(T)
        return self.amplitude * np.sin(2 * np.pi * t / self.period + self.phase)


@dataclass(frozen=True)
class GroundTruth:
    """Everything that determines a generated dataset, given the seed."""

    saturation: tuple[float, ...]  # mu per channel, scaled-spend units
    carryover: tuple[float, ...]  # alpha per channel
    coefficients: tuple[float, ...]  # beta per channel, >= 0
    trend_spec: TrendSpec = TrendSpec()
    seasonal_spec: SeasonalSpec = SeasonalSpec()
    noise_scale: float | None = None  # None -> 5% of the noiseless target's std
    seed: int = 0
    level: float = DEFAULT_LEVEL

    def __post_init__(self):
        AdstockParams(carryover=self.carryover, saturation=self.saturation)  # validates
        if any(b < 0 for b in self.coefficients):
            raise ParameterError("coefficients must be nonnegative")
        if not (len(self.saturation) == len(self.carryover) == len(self.coefficients)):
            raise ParameterError("saturation, carryover, coefficients must share a length")
        if self.noise_scale is not None and self.noise_scale < 0:
            raise ParameterError("noise_scale must be nonnegative")

    @property
    def n_channels(self) -> int:
        return len(self.coefficients)


def paper_ground_truth(seed: int = 7) -> GroundTruth:
    """The two-channel weekly configuration used in the headline experiment."""
    return GroundTruth(
        saturation=(4.0, 3.0),
        carryover=(0.4, 0.2),
        coefficients=(3.0, 2.0),
        seed=seed,
    )


@dataclass(frozen=True)
class SynthComponents:
    """Exact breakdown of the generated target, all in raw target units."""

    contributions: np.ndarray  # (T, P)
    trend: np.ndarray  # (T,), includes the base level
    seasonal: np.ndarray  # (T,)
    noise: np.ndarray  # (T,)
    scaled_spend: np.ndarray  # (T, P), max-abs scaled
    transformed: np.ndarray  # (T, P), f*(scaled spend)

    def noiseless_target(self) -> np.ndarray:
        return (self.trend + self.seasonal) + self.contributions.sum(axis=1)

    def true_shares(self) -> np.ndarray:
        """Per-channel share of the total noiseless performance."""
        totals = self.contributions.sum(axis=0)
        return totals / self.noiseless_target().sum()


def _tv_like(rng: np.random.Generator, T: int, level: float) -> np.ndarray:
    """Block spends with independent log-levels per block, then smoothed.

    Independent levels keep the spend's power at block frequencies (4-9
    weeks) rather than drifting like the market trend, so campaigns stay
    separable from the trend component.
    """
    spend = np.empty(T)
    pos = 0
    while pos < T:
        duration = int(rng.integers(4, 9))
        log_dev = rng.normal(0.0, 0.4)
        block_level = level * float(np.exp(np.clip(log_dev, -1.1, 1.1)))
        spend[pos : pos + duration] = block_level
        pos += duration
    kernel = np.ones(3) / 3.0
    padded = np.concatenate([spend[:1], spend[:1], spend])
    return np.convolve(padded, kernel, mode="valid")[:T]


def _search_like(rng: np.random.Generator, T: int, level: float) -> np.ndarray:
    """Independent lognormal weeks with occasional promotional bursts."""
    spend = level * rng.lognormal(mean=-0.09, sigma=0.42, size=T)
    bursts = rng.random(T) < 0.08
    spend[bursts] *= rng.uniform(1.5, 2.1, size=bursts.sum())
    return spend


def generate(gt: GroundTruth, T: int, P: int | None = None) -> tuple[Dataset, SynthComponents]:
    """Generate a weekly dataset and the exact components behind its target.

    Even-indexed channels get the slow TV-like spend process, odd-indexed the
    spiky search-like one. The target adds per-channel adstocked effects,
    trend, seasonality, and Gaussian noise; everything is reproducible from
    the seed alone.
    """
    if P is None:
        P = gt.n_channels
    if P != gt.n_channels:
        raise ParameterError(f"P={P} does not match ground truth with {gt.n_channels} channels")
    if T < 2 * gt.seasonal_spec.period:
        raise ParameterError(
            f"T={T} is shorter than two seasonal periods ({2 * gt.seasonal_spec.period})"
        )
    rng = np.random.default_rng(gt.seed)
    base_levels = [10_000.0 if p % 2 == 0 else 6_000.0 for p in range(P)]
    spend = np.column_stack(
        [
            (_tv_like if p % 2 == 0 else _search_like)(rng, T, base_levels[p])
            for p in range(P)
        ]
    )
    scaled = spend / np.abs(spend).max(axis=0)
    params = AdstockParams(carryover=gt.carryover, saturation=gt.saturation)
    transformed = adstock_matrix(scaled, params)
    contributions = transformed * np.asarray(gt.coefficients) * gt.level
    trend = gt.trend_spec.evaluate(T) * gt.level
    seasonal = gt.seasonal_spec.evaluate(T) * gt.level
    noiseless = (trend + seasonal) + contributions.sum(axis=1)
    if gt.noise_scale is None:
        sigma = 0.05 * float(np.std(noiseless))
    else:
        sigma = float(gt.noise_scale)
    noise = rng.normal(0.0, sigma, size=T) if sigma > 0 else np.zeros(T)
    target = np.maximum(noiseless + noise, 0.0)

    start = dt.date(2021, 1, 4)
    dates = tuple(start + dt.timedelta(weeks=i) for i in range(T))
    names = tuple(_channel_name(p) for p in range(P))
    dataset = Dataset(
        dates=dates, spend=spend, target=target, channel_names=names, cadence=WEEKLY
    )
    components = SynthComponents(
        contributions=contributions,
        trend=trend,
        seasonal=seasonal,
        noise=noise,
        scaled_spend=scaled,
        transformed=transformed,
    )
    return dataset, components


def _channel_name(p: int) -> str:
    return f"ch{p + 1}_{'tv' if p % 2 == 0 else 'search'}"


def ground_truth_to_json(gt: GroundTruth, components: SynthComponents) -> str:
    """Sidecar JSON with the generator parameters and exact breakdown."""
    payload = {
        "ground_truth": asdict(gt),
        "true_shares": components.true_shares().tolist(),
        "contributions": components.contributions.tolist(),
        "trend": components.trend.tolist(),
        "seasonal": components.seasonal.tolist(),
        "noise": components.noise.tolist(),
    }
    return json.dumps(payload, indent=2, sort_keys=True)
