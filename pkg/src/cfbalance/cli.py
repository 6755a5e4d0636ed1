"""Command-line front end.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import warnings
from typing import Sequence

from . import __version__
from .balance import BalanceConfig
from .data import load_dataset, load_features
from .errors import CfbalanceError, NotConvergedWarning
from .estimator import EstimatorConfig, estimate_ite, fit, model_to_dict
from .evaluate import STANDARD_METHODS, SUITES, ReportTable, replicate_experiment
from .simulate import IHDP_D, IHDP_N, generate, save_simulated

SEED_ENV = "CFBALANCE_SEED"


class _UsageError(Exception):
    pass


def _seed(value: int | None, default: int) -> int:
    if value is not None:
        return value
    env = os.environ.get(SEED_ENV)
    if env is None or env.strip() == "":
        return default
    try:
        return int(env)
    except ValueError:
        raise _UsageError(f"{SEED_ENV}={env!r} is not an integer") from None


def _positive(kind):
    def parse(text):
        v = kind(text)
        if v <= 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return v

    return parse


def _unit_open(text):
    v = float(text)
    if not 0.0 < v < 1.0:
        raise argparse.ArgumentTypeError(f"must lie in (0, 1), got {text}")
    return v


def _unit_closed(text):
    v = float(text)
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError(f"must lie in [0, 1], got {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cfbalance", description="Balancing-weight ITE estimation.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="write a benchmark dataset to disk")
    sim.add_argument("--generator", required=True, choices=["linear", "complex", "ihdp"])
    sim.add_argument("--n", type=_positive(int), default=None, help="units (default 1500; ihdp fixed at 747)")
    sim.add_argument("--p", type=_positive(int), default=None, help="features (default 100; ihdp fixed at 25)")
    sim.add_argument("--seed", type=int, default=None, help=f"default ${SEED_ENV} or 0")
    sim.add_argument("--no-noise", action="store_true", help="drop the outcome noise")
    sim.add_argument("--out", required=True, help="output directory")

    est = sub.add_parser("estimate", help="fit an estimator on a CSV and optionally predict effects")
    est.add_argument("--train", required=True, help="CSV with outcome, treatment and feature columns")
    est.add_argument("--method", choices=["algo1", "algo2", "olsr"], default="algo2")
    est.add_argument("--balance-norm", choices=["l2", "linf"], default="linf")
    est.add_argument("--xi", type=_unit_open, default=0.5)
    est.add_argument("--balance-tol", type=_positive(float), default=1e-8)
    est.add_argument("--balance-max-iter", type=_positive(int), default=50000)
    est.add_argument("--alpha", type=_unit_closed, default=0.9)
    est.add_argument("--folds", type=_positive(int), default=10)
    est.add_argument("--grid-size", type=_positive(int), default=100)
    est.add_argument("--anchor-rule", choices=["cv", "step3"], default="cv")
    est.add_argument("--seed", type=int, default=None, help=f"default ${SEED_ENV} or 0")
    est.add_argument("--outcome-col", default="y")
    est.add_argument("--treatment-col", default="w")
    est.add_argument("--feature-cols", nargs="+", default=None, help="subset of feature columns")
    est.add_argument(
        "--target-features", default=None,
        help="CSV of covariate rows defining the balancing target (default: the training rows)",
    )
    est.add_argument("--predict", default=None, help="CSV of feature rows to score")
    est.add_argument("--out", required=True, help="output directory")

    bench = sub.add_parser("benchmark", help="replicate the simulation study")
    bench.add_argument("--suite", choices=[*SUITES, "all"], default="all")
    bench.add_argument("--replications", type=_positive(int), default=10)
    bench.add_argument("--seed", type=int, default=None, help=f"base seed, default ${SEED_ENV} or 1000")
    bench.add_argument("--jobs", type=_positive(int), default=os.cpu_count() or 1)
    bench.add_argument("--methods", nargs="+", choices=list(STANDARD_METHODS), default=list(STANDARD_METHODS))
    bench.add_argument("--out", required=True, help="output directory")
    return parser


def _write_json(path: str, doc) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def cmd_simulate(args) -> int:
    seed = _seed(args.seed, 0)
    kw = {"noise": not args.no_noise}
    if args.generator == "ihdp":
        if args.n not in (None, IHDP_N) or args.p not in (None, IHDP_D):
            raise _UsageError(f"ihdp has fixed shape n={IHDP_N}, p={IHDP_D}")
        sim = generate("ihdp", seed, **kw)
    else:
        sim = generate(args.generator, seed, args.n or 1500, args.p or 100, **kw)
    paths = save_simulated(sim, args.out)
    _write_json(os.path.join(args.out, "run.json"), {"command": "simulate", **_flags(args), "seed": seed})
    for p in paths:
        print(p)
    return 0


def _flags(args) -> dict:
    # the output location is not part of the configuration
    return {k: v for k, v in vars(args).items() if k != "out"}


def cmd_estimate(args) -> int:
    seed = _seed(args.seed, 0)
    train = load_dataset(args.train, args.outcome_col, args.treatment_col, args.feature_cols)
    target = None
    if args.target_features:
        target = load_features(
            args.target_features, list(train.feature_names), (args.outcome_col, args.treatment_col)
        )
    cfg = EstimatorConfig(
        method=args.method,
        balance=BalanceConfig(args.xi, args.balance_norm, args.balance_max_iter, args.balance_tol),
        alpha=args.alpha,
        folds=args.folds,
        grid_size=args.grid_size,
        seed=seed,
        anchor_rule=args.anchor_rule,
    )
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", NotConvergedWarning)
        model = fit(train, cfg, target)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    os.makedirs(args.out, exist_ok=True)
    doc = model_to_dict(model)
    doc["feature_names"] = list(train.feature_names)
    doc["provenance"] = {"command": "estimate", **_flags(args), "seed": seed}
    model_path = os.path.join(args.out, "model.json")
    _write_json(model_path, doc)
    print(model_path)
    if args.predict:
        X = load_features(args.predict, list(train.feature_names), (args.outcome_col, args.treatment_col))
        tau = estimate_ite(model, X)
        pred_path = os.path.join(args.out, "predictions.csv")
        with open(pred_path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["tau_hat"])
            for t in tau:
                writer.writerow([repr(float(t))])
        print(pred_path)
    return 0


def cmd_benchmark(args) -> int:
    base_seed = _seed(args.seed, 1000)
    suites = list(SUITES) if args.suite == "all" else [args.suite]
    table = None
    for suite in suites:
        part = replicate_experiment(suite, args.methods, args.replications, base_seed, jobs=args.jobs)
        table = part if table is None else table.merge(part)
    meta = dict(table.meta)
    meta["run"] = {"command": "benchmark", **_flags(args), "base_seed": base_seed}
    # jobs changes scheduling only, never results; keep it out of the reproducible report
    meta["run"].pop("jobs", None)
    table = ReportTable(table.rows, meta)
    os.makedirs(args.out, exist_ok=True)
    csv_path = os.path.join(args.out, "report.csv")
    json_path = os.path.join(args.out, "report.json")
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(table.to_csv())
    with open(json_path, "w", encoding="utf-8") as fh:
        fh.write(table.to_json())
    print(table.format())
    for r in table.rows:
        for seed, err in r.failures:
            print(f"failed: {r.dataset}/{r.method} seed {seed}: {err}", file=sys.stderr)
    return 0 if any(r.count > 0 for r in table.rows) else 1


_COMMANDS = {"simulate": cmd_simulate, "estimate": cmd_estimate, "benchmark": cmd_benchmark}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except _UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"cfbalance {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (CfbalanceError, OSError, ValueError) as exc:
        print(f"cfbalance {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
