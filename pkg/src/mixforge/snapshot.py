"""Self-describing JSON snapshot of a fitted model.

One document holds the training data, scaling, decomposition, both posterior
layers, and a config fingerprint. Floats serialize via repr (shortest
round-trip), so load(save(m)) reproduces every numeric field bit-exact.
"""

from __future__ import annotations

import datetime as dt
import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .core import Dataset, ScalePair
from .decomposition import Decomposition
from .errors import BoundsError, SnapshotError
from .layer1 import AdstockPosterior, BetaPrior
from .layer2 import KnotGrid, KtrModel

FORMAT_VERSION = "mixforge-snapshot/1"


@dataclass(frozen=True)
class ModelSnapshot:
    """Everything needed to attribute, forecast, and optimize."""

    dataset: Dataset
    scales: ScalePair
    decomposition: Decomposition
    layer1: AdstockPosterior
    layer2: KtrModel
    beta_prior: BetaPrior
    config: dict  # the fit configuration, as plain JSON-able values
    version: str = FORMAT_VERSION

    @property
    def n_channels(self) -> int:
        return self.dataset.n_channels

    @property
    def n_joint_draws(self) -> int:
        return min(self.layer1.n_draws, self.layer2.n_draws)

    def channel_name(self, index: int) -> str:
        if not 0 <= index < self.n_channels:
            raise BoundsError(
                f"channel index {index} outside 0..{self.n_channels - 1}"
            )
        return self.dataset.channel_names[index]

    def config_fingerprint(self) -> str:
        canon = json.dumps(self.config, sort_keys=True, separators=(",", ":"))
        return "sha256:" + hashlib.sha256(canon.encode()).hexdigest()

    def joint_draw_indices(self, n: int) -> np.ndarray:
        """Deterministic index-aligned selection of n joint posterior draws.

        Strided over the aligned pool when enough draws exist; resamples with
        replacement (with a warning) when n exceeds the pool.
        """
        import warnings

        pool = self.n_joint_draws
        if n <= 0:
            raise BoundsError(f"draw count must be positive, got {n}")
        if n <= pool:
            return np.unique(np.linspace(0, pool - 1, n).round().astype(int))
        warnings.warn(
            f"requested {n} joint draws but only {pool} available; "
            "sampling with replacement",
            stacklevel=2,
        )
        rng = np.random.default_rng(pool)
        return rng.integers(0, pool, size=n)


def _snapshot_payload(m: ModelSnapshot) -> dict:
    d = m.dataset
    return {
        "version": m.version,
        "config": m.config,
        "config_fingerprint": m.config_fingerprint(),
        "dataset": {
            "dates": [day.isoformat() for day in d.dates],
            "cadence": d.cadence,
            "channel_names": list(d.channel_names),
            "spend": d.spend.tolist(),
            "target": d.target.tolist(),
        },
        "scales": {
            "spend_scales": m.scales.spend_scales.tolist(),
            "target_scale": m.scales.target_scale,
        },
        "decomposition": {
            "trend": m.decomposition.trend.tolist(),
            "seasonal": m.decomposition.seasonal.tolist(),
            "residual": m.decomposition.residual.tolist(),
            "period": m.decomposition.period,
        },
        "layer1": {
            "alpha_draws": m.layer1.alpha_draws.tolist(),
            "mu_draws": m.layer1.mu_draws.tolist(),
            "beta_draws": m.layer1.beta_draws.tolist(),
            "intercept_draws": m.layer1.intercept_draws.tolist(),
            "sigma_draws": m.layer1.sigma_draws.tolist(),
            "diagnostics": m.layer1.diagnostics,
            "chains": m.layer1.chains,
        },
        "layer2": {
            "grid": {
                "count": m.layer2.grid.count,
                "positions": m.layer2.grid.positions.tolist(),
                "bandwidth": m.layer2.grid.bandwidth,
            },
            "knot_draws": m.layer2.knot_draws.tolist(),
            "sigma_rw": m.layer2.sigma_rw.tolist(),
            "coefficient_mean": m.layer2.coefficient_mean.tolist(),
            "coefficient_std": m.layer2.coefficient_std.tolist(),
        },
        "beta_prior": {
            "location": m.beta_prior.location.tolist(),
            "scale": m.beta_prior.scale.tolist(),
        },
        # derived, human-readable view of the time-varying coefficients;
        # regenerated on save, ignored on load
        "coefficient_summary": {
            d.dates[t].isoformat(): {
                name: {
                    "mean": float(m.layer2.coefficient_mean[t, p]),
                    "std": float(m.layer2.coefficient_std[t, p]),
                }
                for p, name in enumerate(d.channel_names)
            }
            for t in range(d.n_periods)
        },
    }


def snapshot_to_json(m: ModelSnapshot) -> str:
    return json.dumps(_snapshot_payload(m), sort_keys=True, indent=1)


def save_model(m: ModelSnapshot, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(snapshot_to_json(m))


def snapshot_from_payload(payload: dict) -> ModelSnapshot:
    version = payload.get("version")
    if version != FORMAT_VERSION:
        raise SnapshotError(
            f"unsupported snapshot version {version!r}; this build reads {FORMAT_VERSION!r}"
        )
    try:
        ds = payload["dataset"]
        dataset = Dataset(
            dates=tuple(dt.date.fromisoformat(s) for s in ds["dates"]),
            spend=np.array(ds["spend"], dtype=float),
            target=np.array(ds["target"], dtype=float),
            channel_names=tuple(ds["channel_names"]),
            cadence=ds["cadence"],
        )
        scales = ScalePair(
            spend_scales=np.array(payload["scales"]["spend_scales"], dtype=float),
            target_scale=float(payload["scales"]["target_scale"]),
        )
        dc = payload["decomposition"]
        decomposition = Decomposition(
            trend=np.array(dc["trend"], dtype=float),
            seasonal=np.array(dc["seasonal"], dtype=float),
            residual=np.array(dc["residual"], dtype=float),
            period=int(dc["period"]),
        )
        l1 = payload["layer1"]
        layer1 = AdstockPosterior(
            alpha_draws=np.array(l1["alpha_draws"], dtype=float),
            mu_draws=np.array(l1["mu_draws"], dtype=float),
            beta_draws=np.array(l1["beta_draws"], dtype=float),
            intercept_draws=np.array(l1["intercept_draws"], dtype=float),
            sigma_draws=np.array(l1["sigma_draws"], dtype=float),
            diagnostics=l1["diagnostics"],
            chains=int(l1["chains"]),
        )
        l2 = payload["layer2"]
        grid = KnotGrid(
            count=int(l2["grid"]["count"]),
            positions=np.array(l2["grid"]["positions"], dtype=float),
            bandwidth=float(l2["grid"]["bandwidth"]),
        )
        from .layer2 import build_kernel

        layer2 = KtrModel(
            grid=grid,
            kernel=build_kernel(dataset.n_periods, grid),
            knot_draws=np.array(l2["knot_draws"], dtype=float),
            sigma_rw=np.array(l2["sigma_rw"], dtype=float),
            coefficient_mean=np.array(l2["coefficient_mean"], dtype=float),
            coefficient_std=np.array(l2["coefficient_std"], dtype=float),
        )
        beta_prior = BetaPrior(
            location=np.array(payload["beta_prior"]["location"], dtype=float),
            scale=np.array(payload["beta_prior"]["scale"], dtype=float),
        )
        config = payload["config"]
    except (KeyError, TypeError, ValueError) as exc:
        raise SnapshotError(f"malformed snapshot: {exc}") from exc
    return ModelSnapshot(
        dataset=dataset,
        scales=scales,
        decomposition=decomposition,
        layer1=layer1,
        layer2=layer2,
        beta_prior=beta_prior,
        config=config,
        version=version,
    )


def load_model(path) -> ModelSnapshot:
    try:
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
    except json.JSONDecodeError as exc:
        raise SnapshotError(f"{path}: not a valid snapshot document: {exc}") from exc
    if not isinstance(payload, dict) or "version" not in payload:
        raise SnapshotError(f"{path}: missing snapshot version header")
    return snapshot_from_payload(payload)
