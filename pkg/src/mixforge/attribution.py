"""Posterior channel contributions: the model's headline output.

For each joint posterior draw, a channel's contribution at time t is its
time-varying coefficient times the adstock-transformed scaled spend, mapped
back to target units. Means and spreads are reported per channel and period,
with the non-marketing baseline (trend + seasonality + intercept) as the
remainder.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass

import numpy as np

from .core import Dataset
from .errors import DimensionError, SchemaError
from .forecast import BudgetPlan, _draw_predictions
from .snapshot import ModelSnapshot


@dataclass(frozen=True)
class ContributionReport:
    dates: tuple[dt.date, ...]
    channels: tuple[str, ...]
    mean: np.ndarray  # (T, P), target units
    std: np.ndarray  # (T, P); sqrt of the draw-spread sum
    variance: np.ndarray  # (T, P); the same spread before the square root
    baseline: np.ndarray  # (T,)
    share: np.ndarray  # (T, P): mean / (sum of means + baseline)
    degenerate_std: bool = False  # single-draw report: spread undefined, zeroed

    def __post_init__(self):
        for name in ("mean", "std", "variance", "baseline", "share"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    def channel_index(self, name: str) -> int:
        try:
            return self.channels.index(name)
        except ValueError:
            raise SchemaError(f"unknown channel {name!r}; have {self.channels}") from None

    def total_share(self) -> np.ndarray:
        """Per-channel share of total performance over the whole window."""
        totals = self.mean.sum(axis=0)
        return totals / (self.mean.sum() + self.baseline.sum())

    def as_json_dict(self) -> dict:
        return {
            "dates": [day.isoformat() for day in self.dates],
            "channels": list(self.channels),
            "mean": self.mean.tolist(),
            "std": self.std.tolist(),
            "variance": self.variance.tolist(),
            "baseline": self.baseline.tolist(),
            "share": self.share.tolist(),
            "degenerate_std": self.degenerate_std,
        }

    def to_csv(self, path) -> None:
        import csv

        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["date", "channel", "mean", "std", "variance", "share"])
            for t, day in enumerate(self.dates):
                for p, name in enumerate(self.channels):
                    writer.writerow(
                        [
                            day.isoformat(),
                            name,
                            repr(float(self.mean[t, p])),
                            repr(float(self.std[t, p])),
                            repr(float(self.variance[t, p])),
                            repr(float(self.share[t, p])),
                        ]
                    )
                writer.writerow(
                    [day.isoformat(), "__baseline__", repr(float(self.baseline[t])), "0.0", "0.0",
                     repr(float(1.0 - self.share[t].sum()))]
                )


def contributions(d: Dataset, snapshot: ModelSnapshot, n_draws: int = 500) -> ContributionReport:
    """Per-channel, per-period attribution with uncertainty.

    Evaluates the fitted model on the dataset's own spend (carryover over the
    full history), pairing layer-1 transform draws with layer-2 coefficient
    draws index-aligned.
    """
    if d.n_channels != snapshot.n_channels:
        raise DimensionError(
            f"dataset has {d.n_channels} channels, model has {snapshot.n_channels}"
        )
    indices = snapshot.joint_draw_indices(n_draws)
    plan = BudgetPlan(
        start=d.dates[0],
        end=d.next_dates(1)[0],
        allocation=d.spend.copy(),
    )
    channel_terms, _ = _draw_predictions(plan, snapshot, indices)
    n = channel_terms.shape[0]
    mean = channel_terms.mean(axis=0)
    if n > 1:
        spread = np.sum((channel_terms - mean[None]) ** 2, axis=0) / (n - 1)
        degenerate = False
    else:
        spread = np.zeros_like(mean)
        degenerate = True
    offsets = np.arange(d.n_periods)
    baseline = (
        snapshot.decomposition.baseline_at(offsets)
        + snapshot.layer1.intercept_draws[indices].mean() * snapshot.scales.target_scale
    )
    denom = mean.sum(axis=1) + baseline
    share = mean / denom[:, None]
    return ContributionReport(
        dates=d.dates,
        channels=d.channel_names,
        mean=mean,
        std=np.sqrt(spread),
        variance=spread,
        baseline=baseline,
        share=share,
        degenerate_std=degenerate,
    )


def in_sample_prediction(d: Dataset, snapshot: ModelSnapshot, n_draws: int = 500) -> np.ndarray:
    """Mean prediction on the dataset's own spend, using the same joint draws
    the contribution report uses."""
    indices = snapshot.joint_draw_indices(n_draws)
    plan = BudgetPlan(start=d.dates[0], end=d.next_dates(1)[0], allocation=d.spend.copy())
    _, predictions = _draw_predictions(plan, snapshot, indices)
    return predictions.mean(axis=0)


def additivity_check(report: ContributionReport, predicted_mean, target_scale: float) -> float:
    """Max over time of |prediction - (sum of contributions + baseline)|,
    relative to the target's max-abs scale."""
    predicted_mean = np.asarray(predicted_mean, dtype=float)
    total = report.mean.sum(axis=1) + report.baseline
    if predicted_mean.shape != total.shape:
        raise DimensionError(
            f"prediction shape {predicted_mean.shape} != report length {total.shape}"
        )
    return float(np.max(np.abs(predicted_mean - total)) / target_scale)


@dataclass(frozen=True)
class CalibrationRow:
    channel: str
    model_share: float
    reference_share: float

    @property
    def gap(self) -> float:
        return abs(self.model_share - self.reference_share)


def compare_to_experiment(
    report: ContributionReport,
    reference: dict,
    date_range: tuple[dt.date, dt.date] | None = None,
) -> tuple[CalibrationRow, ...]:
    """Calibration table against externally supplied incremental shares.

    `reference` maps channel name to a share in [0, 1]; a partial mapping
    yields a partial table. Shares are compared as averages over the given
    date range (default: the whole report window). No pass/fail judgment.
    """
    if date_range is None:
        mask = np.ones(len(report.dates), dtype=bool)
    else:
        lo, hi = date_range
        mask = np.array([lo <= day <= hi for day in report.dates])
        if not mask.any():
            raise DimensionError(f"date range [{lo}, {hi}] misses the report window")
    rows = []
    for channel, ref_share in reference.items():
        p = report.channel_index(channel)
        model_share = float(report.share[mask, p].mean())
        rows.append(
            CalibrationRow(channel=channel, model_share=model_share, reference_share=float(ref_share))
        )
    return tuple(rows)
