"""End-to-end fitting: decomposition, both posterior layers, and baselines.

Also hosts the three-way model comparison (static-coefficient layer 1 alone,
kernel regression without the adstock transform, and the stacked model),
reported as a table of train-set metrics and transform-parameter estimates.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .core import Dataset, max_abs_scale
from .decomposition import (
    Decomposition,
    decompose,
    decompose_trend_only,
    default_period,
)
from .errors import InsufficientDataError
from .layer1 import AdstockPosterior, Layer1Config, compute_beta_prior, fit_layer1
from .layer2 import KnotGrid, KtrModel, Layer2Config, fit_layer2
from .snapshot import ModelSnapshot
from .transforms import AdstockParams, adstock_matrix

# below this many full cycles, per-phase means have too few samples and soak
# up regressor variance; fall back to trend-only decomposition
MIN_SEASONAL_CYCLES = 3


@dataclass(frozen=True)
class FitConfig:
    """One bundle of settings for the whole fit, JSON-able for fingerprints."""

    seed: int = 0
    period: int | None = None  # None -> cadence default (7 daily / 52 weekly)
    trend_window: int | None = None
    max_lag: int | None = None
    funnels: tuple[str, ...] | None = None
    draws: int = 3000  # layer-1 draws per chain
    warmup: int = 3000
    chains: int = 2
    knots: int | None = None
    bandwidth: float | None = None
    layer2_draws: int = 1000
    restarts: int = 8
    layer2_max_iter: int = 4000
    layer2_tol: float = 1e-10

    def layer1_config(self) -> Layer1Config:
        return Layer1Config(
            draws=self.draws,
            warmup=self.warmup,
            chains=self.chains,
            seed=self.seed,
            max_lag=self.max_lag,
            funnels=self.funnels,
        )

    def layer2_config(self) -> Layer2Config:
        return Layer2Config(
            draws=self.layer2_draws,
            restarts=self.restarts,
            max_iter=self.layer2_max_iter,
            tol=self.layer2_tol,
            seed=self.seed,
        )

    def as_json_dict(self) -> dict:
        out = asdict(self)
        if out["funnels"] is not None:
            out["funnels"] = list(out["funnels"])
        return out


def decompose_for_fit(d: Dataset, cfg: FitConfig) -> Decomposition:
    """Seasonal+trend when enough cycles exist, trend-only otherwise."""
    period = cfg.period if cfg.period is not None else default_period(d.cadence)
    if d.n_periods >= MIN_SEASONAL_CYCLES * period:
        return decompose(d.target, period, cfg.trend_window)
    return decompose_trend_only(d.target, period, cfg.trend_window)


def fit(d: Dataset, cfg: FitConfig = FitConfig()) -> ModelSnapshot:
    """Run the full two-layer pipeline and package the result."""
    dec = decompose_for_fit(d, cfg)
    scaled, scales = max_abs_scale(d)
    layer1 = fit_layer1(d, dec, cfg.layer1_config())
    grid = KnotGrid.default(d.n_periods, cfg.knots, cfg.bandwidth, period=dec.period)
    layer2 = fit_layer2(d, dec, layer1, grid=grid, cfg=cfg.layer2_config())
    return ModelSnapshot(
        dataset=d,
        scales=scales,
        decomposition=dec,
        layer1=layer1,
        layer2=layer2,
        beta_prior=compute_beta_prior(scaled),
        config=cfg.as_json_dict(),
    )


@dataclass(frozen=True)
class ComparisonRow:
    model: str
    r2: float
    mape: float
    mase: float
    alpha: tuple | None  # transform estimates, None when unavailable
    mu: tuple | None
    beta_time_avg: tuple


@dataclass(frozen=True)
class ModelComparison:
    rows: tuple[ComparisonRow, ...]

    def as_table(self) -> str:
        header = f"{'model':<14} {'R2':>7} {'MAPE':>7} {'MASE':>7}  {'alpha':<14} {'mu':<14} {'beta(t-avg)'}"
        lines = [header, "-" * len(header)]
        for r in self.rows:
            alpha = "-" if r.alpha is None else "/".join(f"{a:.2f}" for a in r.alpha)
            mu = "-" if r.mu is None else "/".join(f"{m:.2f}" for m in r.mu)
            beta = "/".join(f"{b:.2f}" for b in r.beta_time_avg)
            lines.append(
                f"{r.model:<14} {r.r2:>7.3f} {r.mape:>7.3f} {r.mase:>7.3f}  {alpha:<14} {mu:<14} {beta}"
            )
        return "\n".join(lines)

    def row(self, model: str) -> ComparisonRow:
        for r in self.rows:
            if r.model == model:
                return r
        raise KeyError(model)


def _train_metrics(d: Dataset, predicted: np.ndarray):
    from .evalkit import mape, mase, r2

    actual = d.target
    return (
        r2(actual, predicted),
        mape(actual, predicted),
        mase(actual, predicted, actual),
    )


def compare_models(d: Dataset, snapshot: ModelSnapshot, cfg: FitConfig | None = None) -> ModelComparison:
    """Train-set comparison: static layer-1, no-adstock kernel fit, stacked.

    Each row is the model as it would actually be deployed. The single-layer
    static baseline fits with its own full seasonal decomposition (its
    simplicity affords per-phase seasonal means even on few cycles, which
    flatters its in-sample fit); the kernel-only baseline refits the
    time-varying layer on raw scaled spend, so it has no carryover or
    saturation estimates to report; the stacked model is the snapshot itself,
    on the production decomposition.
    """
    cfg = cfg or FitConfig(**{k: v for k, v in snapshot.config.items()})
    if isinstance(cfg.funnels, list):
        cfg = FitConfig(**{**cfg.as_json_dict(), "funnels": tuple(cfg.funnels)})
    dec = snapshot.decomposition
    scales = snapshot.scales
    scaled_spend = d.spend / scales.spend_scales
    baseline = dec.trend + dec.seasonal
    pm = snapshot.layer1.posterior_means()
    F = adstock_matrix(scaled_spend, AdstockParams(carryover=pm.alpha, saturation=pm.mu))

    # static baseline: single-layer refit on its own decomposition
    period = dec.period
    try:
        static_dec = decompose(d.target, period, cfg.trend_window)
    except InsufficientDataError:
        static_dec = dec
    static_l1 = fit_layer1(d, static_dec, cfg.layer1_config())
    static_pm = static_l1.posterior_means()
    F_static = adstock_matrix(
        scaled_spend, AdstockParams(carryover=static_pm.alpha, saturation=static_pm.mu)
    )
    static_pred = ((F_static @ static_pm.beta) + static_pm.intercept) * scales.target_scale + (
        static_dec.trend + static_dec.seasonal
    )

    stacked_pred = (
        np.einsum("tp,tp->t", snapshot.layer2.coefficient_mean, F) + pm.intercept
    ) * scales.target_scale + baseline

    ktr_only = fit_layer2(
        d, dec, snapshot.layer1, grid=snapshot.layer2.grid,
        cfg=cfg.layer2_config(), use_adstock=False,
    )
    ktr_pred = (
        np.einsum("tp,tp->t", ktr_only.coefficient_mean, scaled_spend) + pm.intercept
    ) * scales.target_scale + baseline

    rows = []
    for name, pred, alpha, mu, beta_avg in (
        (
            "static",
            static_pred,
            tuple(static_pm.alpha),
            tuple(static_pm.mu),
            tuple(static_pm.beta),
        ),
        ("kernel-only", ktr_pred, None, None, tuple(ktr_only.coefficient_mean.mean(0))),
        (
            "stacked",
            stacked_pred,
            tuple(pm.alpha),
            tuple(pm.mu),
            tuple(snapshot.layer2.coefficient_mean.mean(0)),
        ),
    ):
        r2v, mapev, masev = _train_metrics(d, pred)
        rows.append(
            ComparisonRow(model=name, r2=r2v, mape=mapev, mase=masev,
                          alpha=alpha, mu=mu, beta_time_avg=beta_avg)
        )
    return ModelComparison(rows=tuple(rows))
