#!/usr/bin/env python3
"""Reproduce the synthetic two-channel experiment end to end.

Generates 130 weeks of spend/performance data with known ground truth
(saturation 4/3, carryover 0.4/0.2, coefficients 3/2), fits the two-layer
model, and prints parameter recovery, the three-model comparison table,
attribution against the generator's truth, holdout forecast metrics, and a
constrained budget optimization.

Usage: python scripts/run_experiment.py [--seed 7] [--outdir results/]
"""

import argparse
import datetime as dt
import json
import pathlib
import time
import warnings

import numpy as np

from mixforge.allocator import AllocationConstraints, optimize_greedy, optimize_sqp
from mixforge.attribution import additivity_check, contributions, in_sample_prediction
from mixforge.evalkit import mape, mase, r2
from mixforge.forecast import BudgetPlan, even_spread, predict
from mixforge.pipeline import FitConfig, compare_models, fit
from mixforge.snapshot import save_model
from mixforge.synthgen import generate, ground_truth_to_json, paper_ground_truth

TRUE_ALPHA = (0.4, 0.2)
TRUE_MU = (4.0, 3.0)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seed", type=int, default=7, help="data generator seed")
    parser.add_argument("--fit-seed", type=int, default=42, help="sampler seed")
    parser.add_argument("--weeks", type=int, default=130)
    parser.add_argument("--outdir", default=None, help="also write artifacts here")
    args = parser.parse_args()

    gt = paper_ground_truth(seed=args.seed)
    dataset, components = generate(gt, T=args.weeks)
    print(f"generated {dataset.n_periods} weeks x {dataset.n_channels} channels "
          f"(seed {args.seed})")

    cfg = FitConfig(seed=args.fit_seed, funnels=("upper", "lower"))
    t0 = time.time()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        snapshot = fit(dataset, cfg)
    print(f"fitted both layers in {time.time() - t0:.1f}s\n")

    pm = snapshot.layer1.posterior_means()
    print("parameter recovery (posterior means vs generator truth):")
    print(f"  {'':12} {'truth':>8} {'estimate':>10}")
    for p, name in enumerate(dataset.channel_names):
        print(f"  carryover {name:<12} {TRUE_ALPHA[p]:>6.2f} {pm.alpha[p]:>10.3f}")
    for p, name in enumerate(dataset.channel_names):
        print(f"  saturation {name:<11} {TRUE_MU[p]:>6.2f} {pm.mu[p]:>10.3f}")
    worst_rhat = max(v["rhat"] for v in snapshot.layer1.diagnostics.values())
    print(f"  worst split R-hat: {worst_rhat:.3f}\n")

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        comparison = compare_models(dataset, snapshot)
    print("model comparison (train window):")
    print(comparison.as_table())
    print()

    report = contributions(dataset, snapshot, n_draws=500)
    gap = additivity_check(
        report, in_sample_prediction(dataset, snapshot, n_draws=500),
        snapshot.scales.target_scale,
    )
    print("attribution vs generator truth (share of total performance):")
    true_shares = components.true_shares()
    for p, name in enumerate(dataset.channel_names):
        print(f"  {name:<16} model {report.total_share()[p]:6.1%}   truth {true_shares[p]:6.1%}")
    print(f"  baseline         model {1 - report.total_share().sum():6.1%}   "
          f"truth {1 - true_shares.sum():6.1%}")
    print(f"  additivity gap: {gap:.2e}\n")

    train, test = dataset.window(0, 100), dataset.window(100, args.weeks)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        train_snapshot = fit(train, cfg)
    plan = BudgetPlan(start=test.dates[0], end=test.next_dates(1)[0],
                      allocation=test.spend.copy())
    predicted = predict(plan, train_snapshot, n_draws=500).mean
    print("30-week holdout forecast (fit on first 100 weeks, actual holdout spend):")
    print(f"  R2 {r2(test.target, predicted):.3f}   "
          f"MAPE {mape(test.target, predicted):.3f}   "
          f"MASE {mase(test.target, predicted, train.target):.3f}\n")

    start = dataset.dates[-1] + dt.timedelta(weeks=1)
    end = start + dt.timedelta(weeks=13)
    budget = float(dataset.spend.sum(axis=0).sum() / dataset.n_periods * 13)
    reference = even_spread(snapshot, budget, start, end)
    constraints = AllocationConstraints.from_deviation(reference, 0.2)
    greedy = optimize_greedy(snapshot, constraints, start, end)
    sqp = optimize_sqp(snapshot, constraints, start, end)
    print(f"13-week budget optimization (total {budget:,.0f}, +-20% of historical shares):")
    print(f"  {'channel':<16} {'reference':>12} {'greedy':>12} {'sqp':>12}")
    for p, name in enumerate(dataset.channel_names):
        print(f"  {name:<16} {reference.allocation.sum(0)[p]:>12,.0f} "
              f"{greedy.plan.allocation.sum(0)[p]:>12,.0f} "
              f"{sqp.plan.allocation.sum(0)[p]:>12,.0f}")
    print(f"  predicted total  {'':>12} {greedy.objective:>12,.0f} {sqp.objective:>12,.0f}")

    if args.outdir:
        out = pathlib.Path(args.outdir)
        out.mkdir(parents=True, exist_ok=True)
        from mixforge.core import save_dataset

        save_dataset(dataset, out / "data.csv")
        (out / "truth.json").write_text(ground_truth_to_json(gt, components))
        save_model(snapshot, out / "model.json")
        report.to_csv(out / "contributions.csv")
        (out / "comparison.json").write_text(json.dumps(
            [
                {"model": row.model, "r2": row.r2, "mape": row.mape, "mase": row.mase}
                for row in comparison.rows
            ],
            indent=2,
        ))
        print(f"\nartifacts written to {out}/")


if __name__ == "__main__":
    main()
