"""Command-line entry point driving the full pipeline.

Subcommands: generate, fit, evaluate, contrib, forecast, optimize, serve.
Exit codes: 0 success, 2 bad paths or configuration, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import datetime as dt
import json
import sys

import numpy as np

from . import __version__
from .attribution import additivity_check, contributions, in_sample_prediction
from .core import ColumnSchema, load_dataset, save_dataset
from .errors import ConfigurationError, MixforgeError
from .evalkit import mape, mase, r2, sliding_window_cv
from .forecast import BudgetPlan, even_spread, plan_dates, predict
from .pipeline import FitConfig, compare_models, fit
from .snapshot import load_model, save_model
from .synthgen import GroundTruth, generate, ground_truth_to_json, paper_ground_truth

_FIT_KEYS = set(FitConfig.__dataclass_fields__)


def _parse_date(raw: str) -> dt.date:
    try:
        return dt.date.fromisoformat(raw)
    except ValueError:
        raise ConfigurationError(f"{raw!r} is not an ISO-8601 date") from None


def _csv_floats(raw: str) -> tuple[float, ...]:
    return tuple(float(v) for v in raw.split(","))


def _load_fit_config(args) -> FitConfig:
    settings = {}
    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as fh:
            try:
                file_settings = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigurationError(f"{args.config}: invalid JSON: {exc}") from None
        unknown = set(file_settings) - _FIT_KEYS
        if unknown:
            raise ConfigurationError(
                f"{args.config}: unrecognized keys {sorted(unknown)}; "
                f"allowed: {sorted(_FIT_KEYS)}"
            )
        settings.update(file_settings)
    for key in ("seed", "draws", "warmup", "chains", "knots", "period", "max_lag"):
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    if getattr(args, "funnels", None):
        settings["funnels"] = tuple(args.funnels.split(","))
    if isinstance(settings.get("funnels"), list):
        settings["funnels"] = tuple(settings["funnels"])
    return FitConfig(**settings)


def _schema_from_args(args, path) -> ColumnSchema:
    if args.date_col and args.target_col and args.channels:
        return ColumnSchema(
            date=args.date_col, target=args.target_col,
            channels=tuple(args.channels.split(",")),
        )
    # default: first column is the date, last is the target, middle are channels
    import csv as _csv

    with open(path, newline="", encoding="utf-8") as fh:
        header = next(_csv.reader(fh))
    if len(header) < 3:
        raise ConfigurationError(
            f"{path}: need at least date, one channel, and target columns"
        )
    return ColumnSchema(date=header[0], target=header[-1], channels=tuple(header[1:-1]))


# --- subcommands -------------------------------------------------------------


def cmd_generate(args) -> int:
    saturation = tuple(4.0 if p % 2 == 0 else 3.0 for p in range(args.channels))
    carryover = tuple(0.4 if p % 2 == 0 else 0.2 for p in range(args.channels))
    coefficients = tuple(3.0 if p % 2 == 0 else 2.0 for p in range(args.channels))
    if args.channels == 2:
        gt = paper_ground_truth(seed=args.seed)
    else:
        gt = GroundTruth(
            saturation=saturation, carryover=carryover, coefficients=coefficients,
            seed=args.seed,
        )
    if args.noise_scale is not None:
        import dataclasses

        gt = dataclasses.replace(gt, noise_scale=args.noise_scale)
    dataset, components = generate(gt, T=args.weeks)
    save_dataset(dataset, args.out)
    if args.truth_out:
        with open(args.truth_out, "w", encoding="utf-8") as fh:
            fh.write(ground_truth_to_json(gt, components))
    print(f"wrote {dataset.n_periods} weeks x {dataset.n_channels} channels to {args.out}")
    return 0


def cmd_fit(args) -> int:
    schema = _schema_from_args(args, args.data)
    dataset = load_dataset(args.data, schema)
    cfg = _load_fit_config(args)
    snapshot = fit(dataset, cfg)
    save_model(snapshot, args.out)
    worst = max(v["rhat"] for v in snapshot.layer1.diagnostics.values())
    print(f"fitted {dataset.n_periods}x{dataset.n_channels}; worst split R-hat {worst:.3f}")
    print(f"snapshot written to {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    schema = _schema_from_args(args, args.data)
    dataset = load_dataset(args.data, schema)
    out = {}
    if args.cv:
        window, hor, stride = (int(v) for v in args.cv.split(","))
        cfg = _load_fit_config(args)

        def procedure(train):
            snapshot = fit(train, cfg)

            def predictor(test):
                plan = BudgetPlan(
                    start=test.dates[0],
                    end=test.next_dates(1)[0],
                    allocation=test.spend.copy(),
                )
                return predict(plan, snapshot, n_draws=args.draws).mean

            return predictor

        report = sliding_window_cv(dataset, procedure, window, hor, stride)
        print(report.as_table())
        out = report.as_json_dict()
    else:
        snapshot = load_model(args.model)
        train_end = snapshot.dataset.dates[-1]
        holdout = [i for i, day in enumerate(dataset.dates) if day > train_end]
        if not holdout:
            raise ConfigurationError(
                "no rows after the model's training range; provide --cv or longer data"
            )
        test = dataset.window(holdout[0], holdout[-1] + 1)
        plan = BudgetPlan(
            start=test.dates[0], end=test.next_dates(1)[0], allocation=test.spend.copy()
        )
        predicted = predict(plan, snapshot, n_draws=args.draws).mean
        out = {
            "r2": r2(test.target, predicted),
            "mape": mape(test.target, predicted),
            "mase": mase(test.target, predicted, snapshot.dataset.target),
            "test_window": [test.dates[0].isoformat(), test.dates[-1].isoformat()],
        }
        print(
            f"holdout [{out['test_window'][0]} .. {out['test_window'][1]}]: "
            f"R2 {out['r2']:.3f}  MAPE {out['mape']:.3f}  MASE {out['mase']:.3f}"
        )
        if args.compare:
            comparison = compare_models(snapshot.dataset, snapshot)
            print()
            print(comparison.as_table())
            out["comparison"] = [
                {
                    "model": row.model, "r2": row.r2, "mape": row.mape, "mase": row.mase,
                    "alpha": row.alpha, "mu": row.mu, "beta_time_avg": row.beta_time_avg,
                }
                for row in comparison.rows
            ]
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(out, fh, indent=2, sort_keys=True)
    return 0


def cmd_contrib(args) -> int:
    snapshot = load_model(args.model)
    if args.data:
        dataset = load_dataset(args.data, _schema_from_args(args, args.data))
    else:
        dataset = snapshot.dataset
    report = contributions(dataset, snapshot, n_draws=args.draws)
    report.to_csv(args.out)
    gap = additivity_check(
        report,
        in_sample_prediction(dataset, snapshot, n_draws=args.draws),
        snapshot.scales.target_scale,
    )
    totals = report.total_share()
    print(f"contributions written to {args.out} (additivity gap {gap:.2e})")
    for name, share in zip(report.channels, totals):
        print(f"  {name:<16} {share:7.1%}")
    baseline = 1.0 - totals.sum()
    print(f"  {'baseline':<16} {baseline:7.1%}")
    return 0


def cmd_forecast(args) -> int:
    snapshot = load_model(args.model)
    start, end = _parse_date(args.start), _parse_date(args.end)
    shares = _csv_floats(args.shares) if args.shares else None
    plan = even_spread(snapshot, args.total, start, end, shares=shares)
    result = predict(plan, snapshot, n_draws=args.draws)
    payload = result.as_json_dict()
    payload["total_budget"] = plan.total
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
    print(
        f"scenario [{start} .. {end}): total predicted "
        f"{result.mean.sum():.0f} (80% band {result.lo80.sum():.0f}..{result.hi80.sum():.0f})"
    )
    print(f"written to {args.out}")
    return 0


def cmd_optimize(args) -> int:
    from .allocator import (
        AllocationConstraints,
        optimize_greedy,
        optimize_sqp,
    )

    snapshot = load_model(args.model)
    start, end = _parse_date(args.start), _parse_date(args.end)
    reference = even_spread(snapshot, args.total, start, end)
    if args.lower and args.upper:
        constraints = AllocationConstraints(
            total=args.total,
            lower=np.array(_csv_floats(args.lower)),
            upper=np.array(_csv_floats(args.upper)),
        )
    else:
        constraints = AllocationConstraints.from_deviation(reference, args.deviation)
    optimizer = optimize_greedy if args.method == "greedy" else optimize_sqp
    result = optimizer(snapshot, constraints, start, end)
    payload = result.as_json_dict(snapshot.dataset.cadence)
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
    totals = result.plan.allocation.sum(axis=0)
    print(f"{args.method}: objective {result.objective:.0f} in {result.iterations} iterations")
    for name, ref_total, got in zip(
        snapshot.dataset.channel_names, reference.allocation.sum(axis=0), totals
    ):
        print(f"  {name:<16} {ref_total:12.0f} -> {got:12.0f}")
    print(f"written to {args.out}")
    return 0


def cmd_serve(args) -> int:
    import os

    import uvicorn

    from .service import create_app

    snapshot = load_model(args.model)
    port = args.port or int(os.environ.get("MIXFORGE_PORT", "8080"))
    app = create_app(snapshot, seed=args.seed)
    uvicorn.run(app, host=args.host, port=port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mixforge",
        description="Bayesian marketing-mix modeling: fit, attribute, forecast, optimize.",
    )
    parser.add_argument("--version", action="version", version=f"mixforge {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="emit a synthetic dataset with known ground truth")
    p.add_argument("--weeks", type=int, default=130)
    p.add_argument("--channels", type=int, default=2)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--noise-scale", type=float, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--truth-out")
    p.set_defaults(handler=cmd_generate)

    def add_schema_flags(q):
        q.add_argument("--date-col")
        q.add_argument("--target-col")
        q.add_argument("--channels", dest="channels")

    p = sub.add_parser("fit", help="fit the two-layer model and write a snapshot")
    p.add_argument("--data", required=True)
    add_schema_flags(p)
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="JSON file of fit settings; flags override")
    p.add_argument("--seed", type=int)
    p.add_argument("--draws", type=int)
    p.add_argument("--warmup", type=int)
    p.add_argument("--chains", type=int)
    p.add_argument("--knots", type=int)
    p.add_argument("--period", type=int)
    p.add_argument("--max-lag", dest="max_lag", type=int)
    p.add_argument("--funnels", help="comma-separated upper/mid/lower per channel")
    p.set_defaults(handler=cmd_fit)

    p = sub.add_parser("evaluate", help="score a fitted model on holdout data or via CV")
    p.add_argument("--data", required=True)
    add_schema_flags(p)
    p.add_argument("--model")
    p.add_argument("--cv", help="window,horizon,stride: refit per fold")
    p.add_argument("--compare", action="store_true", help="emit the three-model table")
    p.add_argument("--draws", type=int, default=300)
    p.add_argument("--json", help="also write the report as JSON")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--warmup", type=int)
    p.add_argument("--chains", type=int)
    p.add_argument("--knots", type=int)
    p.add_argument("--funnels")
    p.set_defaults(handler=cmd_evaluate)

    p = sub.add_parser("contrib", help="per-channel contribution report")
    p.add_argument("--model", required=True)
    p.add_argument("--data")
    add_schema_flags(p)
    p.add_argument("--draws", type=int, default=500)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_contrib)

    p = sub.add_parser("forecast", help="predict performance for a budget scenario")
    p.add_argument("--model", required=True)
    p.add_argument("--total", type=float, required=True)
    p.add_argument("--start", required=True)
    p.add_argument("--end", required=True)
    p.add_argument("--shares", help="comma-separated per-channel fractions")
    p.add_argument("--draws", type=int, default=500)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_forecast)

    p = sub.add_parser("optimize", help="optimize budget allocation under constraints")
    p.add_argument("--model", required=True)
    p.add_argument("--total", type=float, required=True)
    p.add_argument("--start", required=True)
    p.add_argument("--end", required=True)
    p.add_argument("--deviation", type=float, default=0.2)
    p.add_argument("--lower", help="explicit per-channel lower bounds")
    p.add_argument("--upper", help="explicit per-channel upper bounds")
    p.add_argument("--method", choices=("greedy", "sqp"), default="sqp")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_optimize)

    p = sub.add_parser("serve", help="start the scenario HTTP service")
    p.add_argument("--model", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, help="default: MIXFORGE_PORT env var or 8080")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(handler=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except MixforgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except Exception as exc:  # numerical blowups from numpy land here
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
