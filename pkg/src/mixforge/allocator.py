"""Budget allocation under a total-spend constraint with box bounds.

Two strategies on the same plug-in objective (posterior-mean predicted
performance over the horizon): a step-greedy allocator that repeatedly funds
the cell with the best marginal gain, and projected gradient ascent with an
exact projection onto the budget simplex intersected with the boxes. The
default mode optimizes per-channel totals spread evenly across the horizon;
full per-period allocation is opt-in.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field

import numpy as np

from .errors import FeasibilityError, ParameterError
from .forecast import BudgetPlan, even_spread, historical_shares, point_prediction
from .snapshot import ModelSnapshot
from .transforms import carryover, reach, reach_derivative

BUDGET_RTOL = 1e-6


@dataclass(frozen=True)
class AllocationConstraints:
    """Total budget, box bounds, and solver knobs.

    Bounds are per-channel totals in aggregated mode (the default) or per
    (period, channel) cell when `per_period` is True.
    """

    total: float
    lower: np.ndarray
    upper: np.ndarray
    step: float | None = None  # greedy quantum; None -> total / 200
    max_iter: int = 500
    tolerance: float = 1e-9
    per_period: bool = False

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        lo.flags.writeable = False
        hi.flags.writeable = False
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        if self.total < 0:
            raise ParameterError("total budget must be nonnegative")
        if lo.shape != hi.shape:
            raise ParameterError("lower and upper bounds must share a shape")
        if np.any(lo < 0) or np.any(hi < lo):
            raise ParameterError("need 0 <= lower <= upper")
        if self.step is not None and self.step <= 0:
            raise ParameterError("greedy step must be positive")

    def check_feasible(self):
        lo_sum, hi_sum = float(self.lower.sum()), float(self.upper.sum())
        if not (lo_sum <= self.total * (1 + BUDGET_RTOL) + 1e-12):
            raise FeasibilityError(
                f"bounds infeasible: sum of lower bounds {lo_sum:.6g} exceeds budget {self.total:.6g}"
            )
        if not (self.total <= hi_sum * (1 + BUDGET_RTOL) + 1e-12):
            raise FeasibilityError(
                f"bounds infeasible: budget {self.total:.6g} exceeds sum of upper bounds {hi_sum:.6g}"
            )

    @classmethod
    def from_deviation(
        cls,
        reference: BudgetPlan,
        deviation: float,
        total: float | None = None,
        per_period: bool = False,
        **kw,
    ) -> "AllocationConstraints":
        """Boxes at reference +/- a fraction, per channel total (or per cell)."""
        if deviation < 0:
            raise ParameterError("deviation fraction must be nonnegative")
        ref = reference.allocation if per_period else reference.allocation.sum(axis=0)
        return cls(
            total=reference.total if total is None else total,
            lower=ref * (1 - deviation),
            upper=ref * (1 + deviation),
            per_period=per_period,
            **kw,
        )


@dataclass(frozen=True)
class FeasibilityReport:
    budget_gap: float  # |sum - B| / max(B, 1)
    bounds_violation: float  # max clip distance, absolutely

    @property
    def ok(self) -> bool:
        return self.budget_gap <= BUDGET_RTOL and self.bounds_violation <= 1e-12

    def as_json_dict(self) -> dict:
        return {
            "budget_gap": self.budget_gap,
            "bounds_violation": self.bounds_violation,
            "ok": self.ok,
        }


@dataclass(frozen=True)
class AllocationResult:
    plan: BudgetPlan
    objective: float  # predicted total performance over the horizon
    method: str
    iterations: int
    feasibility: FeasibilityReport

    def as_json_dict(self, cadence: str) -> dict:
        from .forecast import plan_dates

        return {
            "dates": [day.isoformat() for day in plan_dates(self.plan, cadence)],
            "allocation": self.plan.allocation.tolist(),
            "total": self.plan.total,
            "objective": self.objective,
            "method": self.method,
            "iterations": self.iterations,
            "feasibility": self.feasibility.as_json_dict(),
        }


class _Workspace:
    """Shared objective machinery over either optimization mode.

    Variables v are per-channel totals (aggregated) or flattened (H, P) cells.
    The additive model makes the objective separable per channel, which the
    greedy exploits by caching per-channel values.
    """

    def __init__(self, snapshot: ModelSnapshot, template: BudgetPlan, per_period: bool):
        self.snapshot = snapshot
        self.template = template
        self.per_period = per_period
        self.H, self.P = template.allocation.shape
        from .forecast import _carryover_inputs

        offsets, _, history = _carryover_inputs(template, snapshot)
        self.offsets = offsets
        self.history = history  # scaled
        pm = snapshot.layer1.posterior_means()
        self.alpha, self.mu = pm.alpha, pm.mu
        self.beta_path = snapshot.layer2.coefficients_at(offsets).mean(axis=0)  # (H, P)
        self.y_scale = snapshot.scales.target_scale
        self.spend_scales = snapshot.scales.spend_scales
        self.max_lag = snapshot.config.get("max_lag")
        baseline = snapshot.decomposition.baseline_at(offsets)
        self.constant = float(baseline.sum() + pm.intercept * self.y_scale * self.H)

    # --- variable packing ----------------------------------------------------
    @property
    def dim(self) -> int:
        return self.H * self.P if self.per_period else self.P

    def to_allocation(self, v: np.ndarray) -> np.ndarray:
        if self.per_period:
            return v.reshape(self.H, self.P)
        return np.tile(v / self.H, (self.H, 1))

    # --- objective -----------------------------------------------------------
    def channel_value(self, p: int, column: np.ndarray) -> float:
        """Predicted contribution of channel p for a raw spend column."""
        scaled = column / self.spend_scales[p]
        full = np.concatenate([self.history[:, p], scaled])
        z = carryover(full, self.alpha[p], self.max_lag)[-self.H :]
        f = reach(z, self.mu[p])
        return float(np.dot(self.beta_path[:, p], f) * self.y_scale)

    def objective(self, v: np.ndarray) -> float:
        alloc = self.to_allocation(v)
        return self.constant + sum(
            self.channel_value(p, alloc[:, p]) for p in range(self.P)
        )

    def gradient(self, v: np.ndarray) -> np.ndarray:
        """Analytic gradient via the reach derivative and carryover weights."""
        alloc = self.to_allocation(v)
        grad_cells = np.empty((self.H, self.P))
        H0 = self.history.shape[0]
        for p in range(self.P):
            scaled = alloc[:, p] / self.spend_scales[p]
            full = np.concatenate([self.history[:, p], scaled])
            z = carryover(full, self.alpha[p], self.max_lag)
            s = self.beta_path[:, p] * reach_derivative(z[-self.H :], self.mu[p])
            # d z_t / d x_u = alpha^(t-u) / W_t for u <= t (normalized weights)
            n_full = full.shape[0]
            window = n_full if self.max_lag is None else min(self.max_lag + 1, n_full)
            weights = self.alpha[p] ** np.arange(window)
            denom = np.cumsum(weights)
            if window < n_full:
                denom = np.concatenate([denom, np.full(n_full - window, denom[-1])])
            denom_h = denom[-self.H :]
            sw = s / denom_h  # (H,)
            # grad wrt scaled plan cell u: sum_{t >= u} sw_t * alpha^(t-u)
            g = np.zeros(self.H)
            for u in range(self.H):
                t_rel = np.arange(u, self.H)
                lags = t_rel - u
                if self.max_lag is not None:
                    keep = lags <= self.max_lag
                    t_rel, lags = t_rel[keep], lags[keep]
                g[u] = float(np.dot(sw[t_rel], self.alpha[p] ** lags))
            grad_cells[:, p] = g * self.y_scale / self.spend_scales[p]
        if self.per_period:
            return grad_cells.ravel()
        return grad_cells.sum(axis=0) / self.H


def project_to_budget(v: np.ndarray, total: float, lower: np.ndarray, upper: np.ndarray) -> np.ndarray:
    """Euclidean projection onto {sum v = total} intersected with [lo, hi].

    Solved by bisection on the shift lambda in v -> clip(v + lambda); the
    budget residual is then spread over unclipped coordinates so the equality
    holds to machine precision.
    """
    if total < lower.sum() - 1e-9 or total > upper.sum() + 1e-9:
        raise FeasibilityError("projection target outside the feasible set")

    def clipped(lam):
        return np.clip(v + lam, lower, upper)

    lo_lam = float((lower - v).min()) - 1.0
    hi_lam = float((upper - v).max()) + 1.0
    for _ in range(200):
        mid = 0.5 * (lo_lam + hi_lam)
        if clipped(mid).sum() < total:
            lo_lam = mid
        else:
            hi_lam = mid
    out = clipped(0.5 * (lo_lam + hi_lam))
    residual = total - out.sum()
    free = (out > lower + 1e-12) & (out < upper - 1e-12)
    if residual != 0 and free.any():
        out[free] += residual / free.sum()
        out = np.clip(out, lower, upper)
    return out


def _finalize(ws: _Workspace, v, method, iterations, constraints) -> AllocationResult:
    alloc = ws.to_allocation(v)
    plan = ws.template.with_allocation(alloc)
    gap = abs(plan.total - constraints.total) / max(constraints.total, 1.0)
    violation = float(
        np.maximum(constraints.lower - v, 0).max(initial=0.0)
        + np.maximum(v - constraints.upper, 0).max(initial=0.0)
    )
    return AllocationResult(
        plan=plan,
        objective=ws.objective(np.asarray(v, dtype=float)),
        method=method,
        iterations=iterations,
        feasibility=FeasibilityReport(budget_gap=gap, bounds_violation=violation),
    )


def _workspace(snapshot, constraints, start: dt.date, end: dt.date) -> _Workspace:
    template = even_spread(snapshot, constraints.total, start, end)
    ws = _Workspace(snapshot, template, constraints.per_period)
    if constraints.lower.shape != (
        (ws.H, ws.P) if constraints.per_period else (ws.P,)
    ):
        raise ParameterError(
            f"bounds shape {constraints.lower.shape} does not match "
            f"{'per-period' if constraints.per_period else 'aggregated'} mode"
        )
    return ws


def optimize_greedy(
    snapshot: ModelSnapshot,
    constraints: AllocationConstraints,
    start: dt.date,
    end: dt.date,
) -> AllocationResult:
    """Fund the best marginal cell one budget quantum at a time.

    Starts from the lower bounds and repeatedly adds the step to the cell
    with the greatest objective gain among those below their upper bound;
    ties break on the lowest cell index. A final fractional step lands the
    total exactly on the budget.
    """
    constraints.check_feasible()
    ws = _workspace(snapshot, constraints, start, end)
    lower = constraints.lower.ravel().astype(float)
    upper = constraints.upper.ravel().astype(float)
    v = lower.copy()
    remaining = constraints.total - v.sum()
    step = constraints.step if constraints.step is not None else constraints.total / 200.0
    if step <= 0 and remaining > 0:
        raise ParameterError("greedy step must be positive when budget remains")

    # separable objective: cache each cell's current value and its value
    # after one more step
    def cell_value(i, vi):
        if ws.per_period:
            t, p = divmod(i, ws.P)
            column = ws.to_allocation(v)[:, p].copy()
            column[t] = vi
            return ws.channel_value(p, column)
        column = np.full(ws.H, vi / ws.H)
        return ws.channel_value(i, column)

    current = np.array([cell_value(i, v[i]) for i in range(v.size)])
    iterations = 0
    while remaining > 1e-12 * max(constraints.total, 1.0):
        quantum = min(step, remaining)
        gains = np.full(v.size, -np.inf)
        for i in range(v.size):
            if v[i] + quantum <= upper[i] + 1e-12:
                gains[i] = cell_value(i, v[i] + quantum) - current[i]
        best = int(np.argmax(gains))
        if not np.isfinite(gains[best]):
            raise FeasibilityError(
                "no cell can absorb the remaining budget without violating its upper bound"
            )
        v[best] = min(v[best] + quantum, upper[best])
        current[best] = cell_value(best, v[best])
        remaining = constraints.total - v.sum()
        iterations += 1
    return _finalize(ws, v, "greedy", iterations, constraints)


def optimize_sqp(
    snapshot: ModelSnapshot,
    constraints: AllocationConstraints,
    start: dt.date,
    end: dt.date,
    initial: BudgetPlan | None = None,
) -> AllocationResult:
    """Projected gradient ascent on the smooth plug-in objective.

    Steps along the analytic gradient, projects back onto the budget/box
    set exactly, halves the step when the objective does not improve, and
    stops at the configured tolerance or iteration cap. The accepted
    objective sequence is non-decreasing.
    """
    constraints.check_feasible()
    ws = _workspace(snapshot, constraints, start, end)
    lower = constraints.lower.ravel().astype(float)
    upper = constraints.upper.ravel().astype(float)
    if initial is not None:
        v0 = initial.allocation.ravel() if constraints.per_period else initial.allocation.sum(axis=0)
        if np.any(v0 < lower - 1e-9) or np.any(v0 > upper + 1e-9):
            raise FeasibilityError("initial plan violates the box bounds")
        v = project_to_budget(v0.astype(float), constraints.total, lower, upper)
    else:
        v = project_to_budget(
            np.clip(constraints.total * np.ones_like(lower) / lower.size, lower, upper),
            constraints.total,
            lower,
            upper,
        )
    value = ws.objective(v)
    scale = max(constraints.total, 1.0)
    eta = 0.1 * scale / max(float(np.abs(ws.gradient(v)).max()), 1e-12)
    iterations = 0
    for iterations in range(1, constraints.max_iter + 1):
        grad = ws.gradient(v)
        moved = False
        while eta > 1e-16 * scale:
            candidate = project_to_budget(v + eta * grad, constraints.total, lower, upper)
            cand_value = ws.objective(candidate)
            if cand_value > value:
                improvement = cand_value - value
                v, value = candidate, cand_value
                eta *= 1.25
                moved = True
                break
            eta *= 0.5
        if not moved:
            break
        if improvement < constraints.tolerance * (abs(value) + 1.0):
            break
    return _finalize(ws, v, "sqp", iterations, constraints)


def marginal_return_curve(
    snapshot: ModelSnapshot,
    channel: int,
    budgets,
    start: dt.date,
    end: dt.date,
) -> np.ndarray:
    """dObjective/dBudget for one channel at each budget level.

    The additive model makes channels separable, so the curve is computed
    with the channel in isolation (others fixed contribute a constant).
    Finite differences at a small relative step; concavity of reach makes
    the curve non-increasing.
    """
    budgets = np.asarray(budgets, dtype=float)
    if np.any(budgets < 0):
        raise ParameterError("budgets must be nonnegative")
    template = even_spread(snapshot, max(float(budgets.max()), 1.0), start, end)
    ws = _Workspace(snapshot, template, per_period=False)
    if not 0 <= channel < ws.P:
        raise ParameterError(f"channel {channel} outside 0..{ws.P - 1}")
    h = max(1e-6 * max(float(budgets.max()), 1.0), 1e-9)

    def value(b):
        return ws.channel_value(channel, np.full(ws.H, b / ws.H))

    return np.array([(value(b + h) - value(b)) / h for b in budgets])
