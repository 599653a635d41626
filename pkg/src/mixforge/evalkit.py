"""Forecast-quality metrics and sliding-window cross-validation.

The CV refits everything inside each fold's training window — transforms,
scaling, decomposition, priors — so no information leaks from the future.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .core import Dataset
from .errors import ConfigurationError, UndefinedMetricError


def r2(actual, predicted) -> float:
    """Coefficient of determination, 1 - SS_res / SS_tot."""
    a = np.asarray(actual, dtype=float)
    p = np.asarray(predicted, dtype=float)
    if a.shape != p.shape or a.ndim != 1 or a.shape[0] < 2:
        raise UndefinedMetricError(f"need two equal-length series of >= 2 points, got {a.shape} vs {p.shape}")
    ss_tot = float(np.sum((a - a.mean()) ** 2))
    if ss_tot == 0:
        raise UndefinedMetricError("R^2 is undefined for a constant actual series")
    ss_res = float(np.sum((a - p) ** 2))
    return 1.0 - ss_res / ss_tot


def mape(actual, predicted) -> float:
    """Mean absolute percentage error.

    Zero-actual points are skipped (and counted in a warning) as long as at
    least 90% of the points are nonzero; below that the metric is undefined.
    """
    a = np.asarray(actual, dtype=float)
    p = np.asarray(predicted, dtype=float)
    if a.shape != p.shape or a.ndim != 1 or a.shape[0] < 1:
        raise UndefinedMetricError("need two equal-length nonempty series")
    nonzero = a != 0
    frac = nonzero.mean()
    if frac < 0.9:
        raise UndefinedMetricError(
            f"MAPE undefined: only {frac:.0%} of actual values are nonzero"
        )
    skipped = int((~nonzero).sum())
    if skipped:
        warnings.warn(f"MAPE skipped {skipped} zero-actual point(s)", stacklevel=2)
    return float(np.mean(np.abs((a[nonzero] - p[nonzero]) / a[nonzero])))


def mase(actual, predicted, train_actual) -> float:
    """Mean absolute error scaled by the lag-1 naive forecast's MAE on train."""
    a = np.asarray(actual, dtype=float)
    p = np.asarray(predicted, dtype=float)
    tr = np.asarray(train_actual, dtype=float)
    if a.shape != p.shape or a.ndim != 1:
        raise UndefinedMetricError("need two equal-length series")
    if tr.ndim != 1 or tr.shape[0] < 2:
        raise UndefinedMetricError("need a training series of >= 2 points")
    naive_mae = float(np.mean(np.abs(np.diff(tr))))
    if naive_mae == 0:
        raise UndefinedMetricError(
            "MASE undefined: training series is constant (zero naive error)"
        )
    return float(np.mean(np.abs(a - p))) / naive_mae


@dataclass(frozen=True)
class FoldResult:
    train_start: int
    train_stop: int  # exclusive; the fold's forecast origin
    test_stop: int  # exclusive
    r2: float
    mape: float
    mase: float


@dataclass(frozen=True)
class MetricReport:
    r2: float
    mape: float
    mase: float
    per_fold: tuple[FoldResult, ...] = ()

    def as_table(self) -> str:
        lines = [f"{'fold':<6} {'train':<12} {'test':<12} {'R2':>8} {'MAPE':>8} {'MASE':>8}"]
        for i, f in enumerate(self.per_fold):
            lines.append(
                f"{i:<6} [{f.train_start},{f.train_stop}) "
                f"[{f.train_stop},{f.test_stop})  {f.r2:>8.3f} {f.mape:>8.3f} {f.mase:>8.3f}"
            )
        lines.append(
            f"{'mean':<6} {'':<12} {'':<12} {self.r2:>8.3f} {self.mape:>8.3f} {self.mase:>8.3f}"
        )
        return "\n".join(lines)

    def as_json_dict(self) -> dict:
        return {
            "r2": self.r2,
            "mape": self.mape,
            "mase": self.mase,
            "per_fold": [
                {
                    "train": [f.train_start, f.train_stop],
                    "test": [f.train_stop, f.test_stop],
                    "r2": f.r2,
                    "mape": f.mape,
                    "mase": f.mase,
                }
                for f in self.per_fold
            ],
        }


def cv_fold_origins(T: int, window: int, horizon: int, stride: int) -> list[int]:
    """Forecast origins: window, window+stride, ... while origin + horizon <= T."""
    if window < 2 or horizon < 1:
        raise ConfigurationError("window must be >= 2 and horizon >= 1")
    if stride < 1:
        raise ConfigurationError(f"stride must be >= 1, got {stride}")
    if window + horizon > T:
        raise ConfigurationError(
            f"window ({window}) + horizon ({horizon}) exceeds series length {T}"
        )
    return list(range(window, T - horizon + 1, stride))


def sliding_window_cv(
    d: Dataset,
    fit_procedure,
    window: int,
    horizon: int,
    stride: int,
) -> MetricReport:
    """Rolling-origin evaluation of a fit procedure.

    `fit_procedure(train: Dataset) -> (test: Dataset) -> np.ndarray` must
    derive everything from its training window alone. Each fold trains on
    rows [origin - window, origin) and is scored on [origin, origin+horizon).
    """
    origins = cv_fold_origins(d.n_periods, window, horizon, stride)
    if len(origins) < 2:
        raise ConfigurationError(
            f"only {len(origins)} fold(s) possible; need at least 2 "
            f"(T={d.n_periods}, window={window}, horizon={horizon}, stride={stride})"
        )
    folds = []
    for origin in origins:
        train = d.window(origin - window, origin)
        test = d.window(origin, origin + horizon)
        predictor = fit_procedure(train)
        predicted = np.asarray(predictor(test), dtype=float)
        folds.append(
            FoldResult(
                train_start=origin - window,
                train_stop=origin,
                test_stop=origin + horizon,
                r2=r2(test.target, predicted),
                mape=mape(test.target, predicted),
                mase=mase(test.target, predicted, train.target),
            )
        )
    return MetricReport(
        r2=float(np.mean([f.r2 for f in folds])),
        mape=float(np.mean([f.mape for f in folds])),
        mase=float(np.mean([f.mase for f in folds])),
        per_fold=tuple(folds),
    )
