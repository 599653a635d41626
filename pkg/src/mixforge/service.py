"""Read-only HTTP facade over a fitted snapshot for what-if exploration.

Endpoints: GET /healthz, GET /model/summary, GET /contributions,
POST /forecast, POST /optimize. The snapshot is loaded once and never
mutated, so concurrent requests share it safely. Every 4xx body carries a
machine-readable ``code`` plus a human ``message``.
"""

from __future__ import annotations

import datetime as dt

import numpy as np
from fastapi import FastAPI, HTTPException, Query, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field, model_validator

from .allocator import (
    AllocationConstraints,
    optimize_greedy,
    optimize_sqp,
)
from .attribution import contributions
from .errors import FeasibilityError, MixforgeError
from .forecast import even_spread, horizon_length, predict
from .snapshot import ModelSnapshot

MAX_DRAWS = 2000
MAX_OPTIMIZER_ITERATIONS = 500


class ScenarioRequest(BaseModel):
    """A budget over a date range: either a total (+ optional shares) or an
    explicit per-period allocation."""

    start: dt.date
    end: dt.date
    total: float | None = Field(default=None, ge=0)
    shares: list[float] | None = None
    allocation: list[list[float]] | None = None
    draws: int = Field(default=500, ge=1, le=MAX_DRAWS)

    @model_validator(mode="after")
    def _check_shape(self):
        if self.end <= self.start:
            raise ValueError("end must be after start")
        if self.total is None and self.allocation is None:
            raise ValueError("provide either total or allocation")
        return self


class OptimizeRequest(BaseModel):
    start: dt.date
    end: dt.date
    total: float = Field(ge=0)
    deviation_pct: float | None = Field(default=None, ge=0)
    lower: list[float] | None = None
    upper: list[float] | None = None
    method: str = Field(default="sqp", pattern="^(greedy|sqp)$")
    step: float | None = Field(default=None, gt=0)

    @model_validator(mode="after")
    def _check_shape(self):
        if self.end <= self.start:
            raise ValueError("end must be after start")
        if self.deviation_pct is None and (self.lower is None or self.upper is None):
            raise ValueError("provide deviation_pct or explicit lower and upper bounds")
        return self


def _error_body(code: str, message: str, **extra) -> dict:
    return {"code": code, "message": message, **extra}


def create_app(snapshot: ModelSnapshot | None = None, seed: int = 0) -> FastAPI:
    app = FastAPI(title="mixforge scenario service", version="1")
    app.state.snapshot = snapshot
    app.state.seed = seed

    @app.exception_handler(RequestValidationError)
    async def validation_handler(request: Request, exc: RequestValidationError):
        return JSONResponse(
            status_code=422,
            content=_error_body(
                "validation_error",
                "request body failed validation",
                fields=[
                    {"loc": [str(x) for x in err["loc"]], "message": err["msg"]}
                    for err in exc.errors()
                ],
            ),
        )

    @app.exception_handler(MixforgeError)
    async def domain_handler(request: Request, exc: MixforgeError):
        status = 422 if isinstance(exc, FeasibilityError) else 400
        return JSONResponse(
            status_code=status,
            content=_error_body(type(exc).__name__, str(exc)),
        )

    def model() -> ModelSnapshot:
        snap = app.state.snapshot
        if snap is None:
            raise HTTPException(
                status_code=503,
                detail=_error_body("model_not_ready", "snapshot not loaded yet"),
            )
        return snap

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "model_loaded": app.state.snapshot is not None}

    @app.get("/model/summary")
    def summary():
        snap = model()
        d = snap.dataset
        pm = snap.layer1.posterior_means()
        return {
            "version": snap.version,
            "config_fingerprint": snap.config_fingerprint(),
            "channels": list(d.channel_names),
            "cadence": d.cadence,
            "training_range": [d.dates[0].isoformat(), d.dates[-1].isoformat()],
            "n_periods": d.n_periods,
            "posterior": {
                "carryover_mean": pm.alpha.tolist(),
                "saturation_mean": pm.mu.tolist(),
                "coefficient_time_avg": snap.layer2.coefficient_mean.mean(axis=0).tolist(),
                "intercept_mean": pm.intercept,
                "noise_scale_mean": pm.sigma,
            },
            "diagnostics": snap.layer1.diagnostics,
            "reference": {
                "weekly_spend_mean": d.spend.mean(axis=0).tolist(),
                "historical_shares": (d.spend.sum(axis=0) / d.spend.sum()).tolist(),
            },
        }

    @app.get("/contributions")
    def get_contributions(draws: int = Query(default=500, ge=1, le=MAX_DRAWS)):
        snap = model()
        report = contributions(snap.dataset, snap, n_draws=draws)
        return report.as_json_dict()

    def _plan_from_request(snap: ModelSnapshot, req: ScenarioRequest):
        if req.allocation is not None:
            alloc = np.asarray(req.allocation, dtype=float)
            H = horizon_length(req.start, req.end, snap.dataset.cadence)
            if alloc.shape != (H, snap.n_channels):
                raise HTTPException(
                    status_code=422,
                    detail=_error_body(
                        "bad_allocation_shape",
                        f"allocation must be {H}x{snap.n_channels} for this horizon",
                    ),
                )
            from .forecast import BudgetPlan

            return BudgetPlan(start=req.start, end=req.end, allocation=alloc)
        shares = None if req.shares is None else np.asarray(req.shares, dtype=float)
        return even_spread(snap, req.total, req.start, req.end, shares=shares)

    @app.post("/forecast")
    def post_forecast(req: ScenarioRequest):
        snap = model()
        plan = _plan_from_request(snap, req)
        import warnings

        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            result = predict(plan, snap, n_draws=req.draws)
        payload = result.as_json_dict()
        payload["total_budget"] = plan.total
        return payload

    @app.post("/optimize")
    def post_optimize(req: OptimizeRequest):
        snap = model()
        reference = even_spread(snap, req.total, req.start, req.end)
        if req.deviation_pct is not None:
            constraints = AllocationConstraints.from_deviation(
                reference, req.deviation_pct,
                step=req.step, max_iter=MAX_OPTIMIZER_ITERATIONS,
            )
        else:
            lower = np.asarray(req.lower, dtype=float)
            upper = np.asarray(req.upper, dtype=float)
            if lower.shape != (snap.n_channels,) or upper.shape != (snap.n_channels,):
                raise HTTPException(
                    status_code=422,
                    detail=_error_body(
                        "bad_bounds_shape",
                        f"bounds must list {snap.n_channels} per-channel totals",
                    ),
                )
            constraints = AllocationConstraints(
                total=req.total, lower=lower, upper=upper,
                step=req.step, max_iter=MAX_OPTIMIZER_ITERATIONS,
            )
        try:
            constraints.check_feasible()
        except FeasibilityError as exc:
            raise HTTPException(
                status_code=422,
                detail=_error_body(
                    "infeasible_constraints",
                    str(exc),
                    feasibility={
                        "total": constraints.total,
                        "lower_sum": float(constraints.lower.sum()),
                        "upper_sum": float(constraints.upper.sum()),
                    },
                ),
            ) from None
        optimizer = optimize_greedy if req.method == "greedy" else optimize_sqp
        result = optimizer(snap, constraints, req.start, req.end)
        payload = result.as_json_dict(snap.dataset.cadence)
        payload["reference_allocation"] = reference.allocation.tolist()
        return payload

    return app
