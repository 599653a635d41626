import datetime as dt

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mixforge.allocator import (
    AllocationConstraints,
    _Workspace,
    marginal_return_curve,
    optimize_greedy,
    optimize_sqp,
    project_to_budget,
)
from mixforge.errors import FeasibilityError, ParameterError
from mixforge.forecast import even_spread


def horizon(snapshot, weeks=6):
    start = snapshot.dataset.dates[-1] + dt.timedelta(weeks=1)
    return start, start + dt.timedelta(weeks=weeks)


class TestProjection:
    def test_exact_budget_and_bounds(self):
        v = np.array([5.0, 1.0, 9.0])
        lo = np.zeros(3)
        hi = np.array([4.0, 4.0, 4.0])
        out = project_to_budget(v, 10.0, lo, hi)
        assert out.sum() == pytest.approx(10.0, abs=1e-12)
        assert np.all(out >= lo) and np.all(out <= hi)

    @given(
        arrays(np.float64, 5, elements=st.floats(-100, 100)),
        st.floats(min_value=1.0, max_value=40.0),
    )
    @settings(max_examples=60, deadline=None)
    def test_projection_properties(self, v, total):
        lo = np.zeros(5)
        hi = np.full(5, 10.0)
        out = project_to_budget(v, total, lo, hi)
        assert abs(out.sum() - total) <= 1e-9 * max(total, 1.0)
        assert np.all(out >= lo - 1e-12) and np.all(out <= hi + 1e-12)

    def test_infeasible_target(self):
        with pytest.raises(FeasibilityError):
            project_to_budget(np.ones(2), 100.0, np.zeros(2), np.ones(2))


class TestConstraints:
    def test_deviation_construction(self, fitted_snapshot):
        start, end = horizon(fitted_snapshot)
        ref = even_spread(fitted_snapshot, 100_000.0, start, end)
        cons = AllocationConstraints.from_deviation(ref, 0.2)
        ref_totals = ref.allocation.sum(axis=0)
        np.testing.assert_allclose(cons.lower, 0.8 * ref_totals)
        np.testing.assert_allclose(cons.upper, 1.2 * ref_totals)
        cons.check_feasible()

    def test_infeasible_lower_sum(self):
        with pytest.raises(FeasibilityError):
            AllocationConstraints(
                total=5.0, lower=np.array([3.0, 3.0]), upper=np.array([9.0, 9.0])
            ).check_feasible()

    def test_validation(self):
        with pytest.raises(ParameterError):
            AllocationConstraints(total=1.0, lower=np.array([2.0]), upper=np.array([1.0]))
        with pytest.raises(ParameterError):
            AllocationConstraints(
                total=1.0, lower=np.array([0.0]), upper=np.array([1.0]), step=0.0
            )


def symmetric_snapshot(fitted_snapshot):
    """A snapshot variant whose channels are clones: same transform
    parameters, same coefficients, same scales."""
    import dataclasses

    from mixforge.layer1 import AdstockPosterior
    from mixforge.layer2 import KtrModel
    from mixforge.core import ScalePair

    snap = fitted_snapshot
    l1 = snap.layer1
    sym_l1 = AdstockPosterior(
        alpha_draws=np.tile(l1.alpha_draws[:, :1], (1, 2)),
        mu_draws=np.tile(l1.mu_draws[:, :1], (1, 2)),
        beta_draws=np.tile(l1.beta_draws[:, :1], (1, 2)),
        intercept_draws=l1.intercept_draws,
        sigma_draws=l1.sigma_draws,
        diagnostics=l1.diagnostics,
        chains=l1.chains,
    )
    l2 = snap.layer2
    sym_l2 = KtrModel(
        grid=l2.grid,
        kernel=l2.kernel,
        knot_draws=np.tile(l2.knot_draws[:, :, :1], (1, 1, 2)),
        sigma_rw=np.tile(l2.sigma_rw[:1], 2),
        coefficient_mean=np.tile(l2.coefficient_mean[:, :1], (1, 2)),
        coefficient_std=np.tile(l2.coefficient_std[:, :1], (1, 2)),
    )
    sym_scales = ScalePair(
        spend_scales=np.tile(snap.scales.spend_scales[:1], 2),
        target_scale=snap.scales.target_scale,
    )
    from mixforge.core import Dataset

    d = snap.dataset
    sym_dataset = Dataset(
        dates=d.dates,
        spend=np.tile(d.spend[:, :1], (1, 2)),  # identical trailing history too
        target=d.target,
        channel_names=d.channel_names,
        cadence=d.cadence,
    )
    return dataclasses.replace(
        snap, dataset=sym_dataset, layer1=sym_l1, layer2=sym_l2, scales=sym_scales
    )


class TestGreedy:
    def test_symmetric_channels_split_evenly(self, fitted_snapshot):
        snap = symmetric_snapshot(fitted_snapshot)
        start, end = horizon(snap)
        B = 50_000.0
        cons = AllocationConstraints(
            total=B, lower=np.zeros(2), upper=np.full(2, B), step=B / 200
        )
        result = optimize_greedy(snap, cons, start, end)
        totals = result.plan.allocation.sum(axis=0)
        assert abs(totals[0] - totals[1]) <= B / 200 + 1e-9  # within one quantum
        assert abs(totals[0] - B / 2) <= 0.01 * B

    def test_budget_conservation_and_bounds(self, fitted_snapshot):
        start, end = horizon(fitted_snapshot)
        ref = even_spread(fitted_snapshot, 120_000.0, start, end)
        cons = AllocationConstraints.from_deviation(ref, 0.2)
        result = optimize_greedy(fitted_snapshot, cons, start, end)
        assert result.feasibility.budget_gap <= 1e-6
        totals = result.plan.allocation.sum(axis=0)
        assert np.all(totals >= cons.lower - 1e-9)
        assert np.all(totals <= cons.upper + 1e-9)

    def test_budget_equals_lower_bounds_returns_them(self, fitted_snapshot):
        start, end = horizon(fitted_snapshot)
        lower = np.array([30_000.0, 20_000.0])
        cons = AllocationConstraints(total=50_000.0, lower=lower, upper=lower * 3)
        result = optimize_greedy(fitted_snapshot, cons, start, end)
        np.testing.assert_allclose(result.plan.allocation.sum(axis=0), lower, rtol=1e-12)
        assert result.iterations == 0

    def test_null_channel_gets_only_lower_bound(self, fitted_snapshot):
        import dataclasses

        from mixforge.layer2 import KtrModel

        snap = fitted_snapshot
        l2 = snap.layer2
        knots = l2.knot_draws.copy()
        knots[:, :, 1] = 0.0  # channel 2 worthless
        dead = dataclasses.replace(
            snap,
            layer2=KtrModel(
                grid=l2.grid, kernel=l2.kernel, knot_draws=knots,
                sigma_rw=l2.sigma_rw,
                coefficient_mean=np.einsum("tj,njp->tp", l2.kernel, knots) / knots.shape[0],
                coefficient_std=np.zeros_like(l2.coefficient_std),
            ),
        )
        start, end = horizon(dead)
        cons = AllocationConstraints(
            total=40_000.0, lower=np.array([0.0, 5_000.0]), upper=np.full(2, 40_000.0)
        )
        result = optimize_greedy(dead, cons, start, end)
        totals = result.plan.allocation.sum(axis=0)
        assert totals[1] == pytest.approx(5_000.0, abs=1e-6)

    def test_infeasible_before_iterating(self, fitted_snapshot):
        start, end = horizon(fitted_snapshot)
        cons = AllocationConstraints(
            total=10.0, lower=np.array([20.0, 20.0]), upper=np.array([30.0, 30.0])
        )
        with pytest.raises(FeasibilityError):
            optimize_greedy(fitted_snapshot, cons, start, end)


class TestSqp:
    def test_symmetric_split_within_one_percent(self, fitted_snapshot):
        snap = symmetric_snapshot(fitted_snapshot)
        start, end = horizon(snap)
        B = 50_000.0
        cons = AllocationConstraints(total=B, lower=np.zeros(2), upper=np.full(2, B))
        result = optimize_sqp(snap, cons, start, end)
        totals = result.plan.allocation.sum(axis=0)
        assert abs(totals[0] - B / 2) <= 0.01 * B

    def test_dominant_channel_hits_upper_bound(self, fitted_snapshot):
        import dataclasses

        from mixforge.layer2 import KtrModel

        snap = symmetric_snapshot(fitted_snapshot)
        l2 = snap.layer2
        knots = l2.knot_draws.copy()
        knots[:, :, 0] *= 2.0  # channel 1 dominates, same curves otherwise
        dom = dataclasses.replace(
            snap,
            layer2=KtrModel(
                grid=l2.grid, kernel=l2.kernel, knot_draws=knots,
                sigma_rw=l2.sigma_rw,
                coefficient_mean=np.einsum("tj,njp->tp", l2.kernel, knots) / knots.shape[0],
                coefficient_std=l2.coefficient_std,
            ),
        )
        start, end = horizon(dom)
        ref = even_spread(dom, 60_000.0, start, end, shares=(0.5, 0.5))
        cons = AllocationConstraints.from_deviation(ref, 0.2)
        result = optimize_sqp(dom, cons, start, end)
        totals = result.plan.allocation.sum(axis=0)
        assert totals[0] == pytest.approx(cons.upper[0], rel=1e-6)

    def test_objective_at_least_initial(self, fitted_snapshot):
        start, end = horizon(fitted_snapshot)
        ref = even_spread(fitted_snapshot, 90_000.0, start, end)
        cons = AllocationConstraints.from_deviation(ref, 0.2)
        ws = _Workspace(fitted_snapshot, ref, per_period=False)
        initial_objective = ws.objective(ref.allocation.sum(axis=0))
        result = optimize_sqp(fitted_snapshot, cons, start, end, initial=ref)
        assert result.objective >= initial_objective - 1e-9

    def test_matches_greedy_with_fine_step(self, fitted_snapshot):
        start, end = horizon(fitted_snapshot)
        ref = even_spread(fitted_snapshot, 80_000.0, start, end)
        cons_fine = AllocationConstraints.from_deviation(ref, 0.2, step=80.0)
        g = optimize_greedy(fitted_snapshot, cons_fine, start, end)
        s = optimize_sqp(fitted_snapshot, cons_fine, start, end)
        assert s.objective >= g.objective - 1e-6 * abs(g.objective)


class TestGridOracle:
    def test_both_methods_match_exhaustive_search_one_period(self, fitted_snapshot):
        # 2 channels, 1 period: brute-force the whole simplex
        snap = fitted_snapshot
        start = snap.dataset.dates[-1] + dt.timedelta(weeks=1)
        end = start + dt.timedelta(weeks=1)
        B = 30_000.0
        cons = AllocationConstraints(
            total=B, lower=np.zeros(2), upper=np.full(2, B), step=B / 500
        )
        g = optimize_greedy(snap, cons, start, end)
        s = optimize_sqp(snap, cons, start, end)

        template = even_spread(snap, B, start, end)
        ws = _Workspace(snap, template, per_period=False)
        xs = np.linspace(0.0, B, 10_001)
        best = max(ws.objective(np.array([x, B - x])) for x in xs)
        assert g.objective >= best - 1e-3 * abs(best)
        assert s.objective >= best - 1e-3 * abs(best)

    def test_deviation_bounds_never_violated(self, fitted_snapshot):
        start, end = horizon(fitted_snapshot)
        ref = even_spread(fitted_snapshot, 100_000.0, start, end)
        cons = AllocationConstraints.from_deviation(ref, 0.2)
        for method in (optimize_greedy, optimize_sqp):
            result = method(fitted_snapshot, cons, start, end)
            totals = result.plan.allocation.sum(axis=0)
            ref_totals = ref.allocation.sum(axis=0)
            assert np.all(totals >= 0.8 * ref_totals - 1e-6)
            assert np.all(totals <= 1.2 * ref_totals + 1e-6)


class TestMarginalReturnCurve:
    def test_non_increasing_and_maximal_at_zero(self, fitted_snapshot):
        start, end = horizon(fitted_snapshot)
        budgets = np.linspace(0.0, 150_000.0, 16)
        curve = marginal_return_curve(fitted_snapshot, 0, budgets, start, end)
        assert np.all(np.diff(curve) <= 1e-9)
        assert curve[0] == curve.max()

    def test_null_channel_curve_is_zero(self, fitted_snapshot):
        import dataclasses

        from mixforge.layer2 import KtrModel

        snap = fitted_snapshot
        l2 = snap.layer2
        knots = np.zeros_like(l2.knot_draws)
        dead = dataclasses.replace(
            snap,
            layer2=KtrModel(
                grid=l2.grid, kernel=l2.kernel, knot_draws=knots,
                sigma_rw=l2.sigma_rw,
                coefficient_mean=np.zeros_like(l2.coefficient_mean),
                coefficient_std=np.zeros_like(l2.coefficient_std),
            ),
        )
        start, end = horizon(dead)
        curve = marginal_return_curve(dead, 1, np.linspace(0, 1e5, 5), start, end)
        np.testing.assert_allclose(curve, 0.0, atol=1e-12)

    def test_bad_channel_rejected(self, fitted_snapshot):
        start, end = horizon(fitted_snapshot)
        with pytest.raises(ParameterError):
            marginal_return_curve(fitted_snapshot, 7, [0.0, 1.0], start, end)
