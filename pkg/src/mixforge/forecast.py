"""Performance prediction for hypothetical budgets over a date range.

Predictions run per posterior draw: spend is scaled with the training-time
factors, carried over (seeded with trailing historical spend when the horizon
touches the training window), saturated, and weighted by the time-varying
coefficients extrapolated to the horizon. Trend holds its last value into the
future; seasonality repeats.
"""

from __future__ import annotations

import datetime as dt
import warnings
from dataclasses import dataclass

import numpy as np

from .core import _CADENCE_DAYS, Dataset
from .errors import DimensionError, ParameterError
from .snapshot import ModelSnapshot
from .transforms import carryover, reach


@dataclass(frozen=True)
class BudgetPlan:
    """Per-period, per-channel allocation over [start, end).

    The end date is exclusive, so a single-period plan has end = start + one
    cadence step and start < end always holds.
    """

    start: dt.date
    end: dt.date
    allocation: np.ndarray  # (H, P), nonnegative

    def __post_init__(self):
        alloc = np.asarray(self.allocation, dtype=float)
        alloc.flags.writeable = False
        object.__setattr__(self, "allocation", alloc)
        if self.start >= self.end:
            raise ParameterError(
                f"horizon start {self.start} must precede end {self.end}"
            )
        if alloc.ndim != 2:
            raise DimensionError(f"allocation must be (H, P), got {alloc.shape}")
        if np.any(alloc < 0) or not np.all(np.isfinite(alloc)):
            raise ParameterError("allocations must be finite and nonnegative")

    @property
    def horizon(self) -> int:
        return self.allocation.shape[0]

    @property
    def n_channels(self) -> int:
        return self.allocation.shape[1]

    @property
    def total(self) -> float:
        return float(self.allocation.sum())

    def with_allocation(self, allocation) -> "BudgetPlan":
        return BudgetPlan(start=self.start, end=self.end, allocation=np.array(allocation))


def horizon_length(start: dt.date, end: dt.date, cadence: str) -> int:
    step = _CADENCE_DAYS[cadence]
    days = (end - start).days
    if days <= 0:
        raise ParameterError(f"horizon start {start} must precede end {end}")
    if days % step:
        raise ParameterError(
            f"horizon [{start}, {end}) is not a whole number of {cadence} steps"
        )
    return days // step


def plan_dates(plan: BudgetPlan, cadence: str) -> tuple[dt.date, ...]:
    step = dt.timedelta(days=_CADENCE_DAYS[cadence])
    return tuple(plan.start + step * i for i in range(plan.horizon))


def historical_shares(d: Dataset) -> np.ndarray:
    totals = d.spend.sum(axis=0)
    return totals / totals.sum()


def even_spread(
    snapshot: ModelSnapshot,
    total: float,
    start: dt.date,
    end: dt.date,
    shares=None,
) -> BudgetPlan:
    """Spread a total budget evenly across the horizon's periods.

    Default per-channel shares are the historical spend shares; explicit
    shares must be nonnegative and sum to 1.
    """
    if total < 0:
        raise ParameterError(f"total budget must be nonnegative, got {total}")
    d = snapshot.dataset
    H = horizon_length(start, end, d.cadence)
    if shares is None:
        shares = historical_shares(d)
    shares = np.asarray(shares, dtype=float)
    if shares.shape != (d.n_channels,):
        raise ParameterError(
            f"need {d.n_channels} shares, got shape {shares.shape}"
        )
    if np.any(shares < 0) or abs(shares.sum() - 1.0) > 1e-9:
        raise ParameterError("shares must be nonnegative and sum to 1")
    allocation = np.tile(total * shares / H, (H, 1))
    return BudgetPlan(start=start, end=end, allocation=allocation)


def _plan_offsets(plan: BudgetPlan, d: Dataset) -> np.ndarray:
    """Time indices of the plan's rows relative to the training start."""
    step = _CADENCE_DAYS[d.cadence]
    days = (plan.start - d.dates[0]).days
    if days % step:
        raise ParameterError(
            f"plan start {plan.start} is not aligned with the training grid "
            f"starting {d.dates[0]} ({d.cadence})"
        )
    first = days // step
    return np.arange(first, first + plan.horizon)


def _carryover_inputs(plan: BudgetPlan, snapshot: ModelSnapshot):
    """Scaled plan spend plus the scaled history preceding the horizon."""
    d = snapshot.dataset
    offsets = _plan_offsets(plan, d)
    scaled_plan = plan.allocation / snapshot.scales.spend_scales
    first = int(offsets[0])
    if first < 0:
        warnings.warn(
            "plan starts before the training data; carryover assumes zero "
            "pre-horizon spend (cold start)",
            stacklevel=3,
        )
        history = np.zeros((0, d.n_channels))
    else:
        scaled_train = d.spend / snapshot.scales.spend_scales
        known = scaled_train[: min(first, d.n_periods)]
        gap = first - known.shape[0]
        if gap > 0:
            warnings.warn(
                f"plan starts {gap} period(s) after the training data ends; "
                "the gap is treated as zero spend",
                stacklevel=3,
            )
            known = np.vstack([known, np.zeros((gap, d.n_channels))])
        history = known
    return offsets, scaled_plan, history


@dataclass(frozen=True)
class ScenarioResult:
    dates: tuple[dt.date, ...]
    mean: np.ndarray
    lo80: np.ndarray
    hi80: np.ndarray
    per_channel_mean: np.ndarray  # (H, P)

    def as_json_dict(self) -> dict:
        return {
            "dates": [day.isoformat() for day in self.dates],
            "mean": self.mean.tolist(),
            "lo80": self.lo80.tolist(),
            "hi80": self.hi80.tolist(),
            "per_channel_mean": self.per_channel_mean.tolist(),
        }


def _draw_predictions(plan: BudgetPlan, snapshot: ModelSnapshot, indices: np.ndarray):
    """Per-draw channel terms and predictions over the plan horizon.

    Returns (channel_terms[n, H, P], predictions[n, H]) in target units.
    """
    if plan.n_channels != snapshot.n_channels:
        raise DimensionError(
            f"plan has {plan.n_channels} channels, model has {snapshot.n_channels}"
        )
    offsets, scaled_plan, history = _carryover_inputs(plan, snapshot)
    l1, l2 = snapshot.layer1, snapshot.layer2
    max_lag = snapshot.config.get("max_lag")
    betas = l2.coefficients_at(offsets)[indices % l2.n_draws]  # (n, H, P)
    y_scale = snapshot.scales.target_scale
    H, P = scaled_plan.shape
    full = np.vstack([history, scaled_plan])
    n = indices.shape[0]
    channel_terms = np.empty((n, H, P))
    for k, idx in enumerate(indices):
        for p in range(P):
            z = carryover(full[:, p], l1.alpha_draws[idx, p], max_lag)[-H:]
            f = reach(z, l1.mu_draws[idx, p])
            channel_terms[k, :, p] = betas[k, :, p] * f * y_scale
    baseline = snapshot.decomposition.baseline_at(offsets)
    intercepts = l1.intercept_draws[indices] * y_scale
    predictions = channel_terms.sum(axis=2) + baseline[None, :] + intercepts[:, None]
    return channel_terms, predictions


def predict(plan: BudgetPlan, snapshot: ModelSnapshot, n_draws: int = 500) -> ScenarioResult:
    """Predictive mean and central 80% band for a budget plan."""
    indices = snapshot.joint_draw_indices(n_draws)
    channel_terms, predictions = _draw_predictions(plan, snapshot, indices)
    return ScenarioResult(
        dates=plan_dates(plan, snapshot.dataset.cadence),
        mean=predictions.mean(axis=0),
        lo80=np.quantile(predictions, 0.10, axis=0),
        hi80=np.quantile(predictions, 0.90, axis=0),
        per_channel_mean=channel_terms.mean(axis=0),
    )


def point_prediction(allocation: np.ndarray, plan: BudgetPlan, snapshot: ModelSnapshot):
    """Plug-in prediction at the posterior means; the optimizer's objective.

    Returns (total, per_date) for the plan with `allocation` substituted.
    """
    work = plan.with_allocation(allocation)
    offsets, scaled_plan, history = _carryover_inputs(work, snapshot)
    pm = snapshot.layer1.posterior_means()
    beta_path = snapshot.layer2.coefficients_at(offsets).mean(axis=0)  # (H, P)
    max_lag = snapshot.config.get("max_lag")
    y_scale = snapshot.scales.target_scale
    H, P = scaled_plan.shape
    full = np.vstack([history, scaled_plan])
    terms = np.empty((H, P))
    for p in range(P):
        z = carryover(full[:, p], pm.alpha[p], max_lag)[-H:]
        terms[:, p] = beta_path[:, p] * reach(z, pm.mu[p]) * y_scale
    baseline = snapshot.decomposition.baseline_at(offsets)
    per_date = terms.sum(axis=1) + baseline + pm.intercept * y_scale
    return float(per_date.sum()), per_date
