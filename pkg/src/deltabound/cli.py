"""Command line front end.

Artifacts live under a working directory (--out) with fixed names so the
subcommands compose: ``train`` writes stats.json, ``modify`` writes
mods.json, ``bounds`` reads both and writes bounds.json, and the decision
commands read those.  ``--data`` accepts a libsvm-format path or
``synthetic:n,d,density`` for a generated problem.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .decisions import (
    RetrainPolicy,
    classify_rows,
    param_change_upper,
    screen_samples,
    verdicts_to_jsonl,
)
from .delta_bounds import evaluate_bounds
from .experiment import (
    ExperimentConfig,
    emit_tables,
    generate_modifications,
    run_experiment,
    synthetic_dataset,
)
from .objectives import make_objective
from .partial_opt import PartialPlan, optimize_plan, tightened_bounds
from .solver import stats_from_json, stats_to_json, train
from .sparse_data import ModificationSet, OverlayView, parse_libsvm


def _load_dataset(source: str, seed: int):
    if source.startswith("synthetic:"):
        parts = source.split(":", 1)[1].split(",")
        if len(parts) != 3:
            raise SystemExit("synthetic dataset must be synthetic:n,d,density")
        return synthetic_dataset(int(parts[0]), int(parts[1]), float(parts[2]), seed)
    return parse_libsvm(Path(source).read_text())


def _lambdas(text: str) -> tuple[float, ...]:
    return tuple(float(t) for t in text.split(",") if t.strip())


def _single_lambda(text: str) -> float:
    vals = _lambdas(text)
    if len(vals) != 1:
        raise SystemExit("this command takes a single --lambda value")
    return vals[0]


def _load_stats(out: Path):
    path = out / "stats.json"
    if not path.exists():
        raise SystemExit(f"missing {path}; run the train command first")
    return stats_from_json(path.read_text())


def _load_mods(out: Path) -> ModificationSet:
    path = out / "mods.json"
    if not path.exists():
        raise SystemExit(f"missing {path}; run the modify command first")
    return ModificationSet.from_json(path.read_text())


def _bound_pipeline(args):
    dataset = _load_dataset(args.data, args.seed)
    objective = make_objective(_single_lambda(getattr(args, "lam")), args.gamma)
    out = Path(args.out)
    solution, cached = _load_stats(out)
    mods = _load_mods(out)
    view = OverlayView(dataset, mods)
    delta, gap, ctx = evaluate_bounds(cached, solution, objective, view, mods)
    return dataset, objective, out, solution, cached, mods, view, delta, gap, ctx


def cmd_train(args) -> int:
    dataset = _load_dataset(args.data, args.seed)
    objective = make_objective(_single_lambda(args.lam), args.gamma)
    solution, cached = train(
        dataset, objective, tolerance=args.tolerance, max_epochs=args.max_epochs
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "stats.json").write_text(stats_to_json(solution, cached))
    print(
        f"trained n={dataset.n} d={dataset.d} nnz={dataset.nnz} "
        f"gap={solution.residual_gap:.3e} epochs={solution.epochs} "
        f"converged={solution.converged}"
    )
    return 0 if solution.converged else 1


def cmd_stats(args) -> int:
    solution, cached = _load_stats(Path(args.out))
    print(f"n={solution.alpha.shape[0]} d={solution.w.shape[0]}")
    print(f"residual_gap={cached.residual_gap!r}")
    print(f"|w|={float(np.linalg.norm(solution.w))!r}")
    print(f"support={int(np.sum(solution.alpha > 0.0))}")
    return 0


def cmd_modify(args) -> int:
    dataset = _load_dataset(args.data, args.seed)
    mods = generate_modifications(dataset, args.scenario, args.magnitude, args.mod_seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "mods.json").write_text(mods.to_json())
    print(
        f"scenario={args.scenario} edits={len(mods)} "
        f"rows={mods.rows.size} cols={mods.cols.size}"
    )
    return 0


def cmd_bounds(args) -> int:
    (dataset, objective, out, solution, cached, mods,
     view, delta, gap, ctx) = _bound_pipeline(args)
    report = ctx.report("combined")
    (out / "bounds.json").write_text(report.to_json())
    print(
        f"gap={gap!r} dual_radius={report.dual_radius!r} "
        f"primal_radius={report.primal_radius!r}"
    )
    if args.tighten:
        plan = PartialPlan(args.scenario)
        check = optimize_plan(view, objective, solution, cached, delta, plan, mods, gap)
        if check is None:
            print("nothing to tighten (empty edit set)")
            return 0
        tight = tightened_bounds(check, mods, objective, cached, delta)
        (out / "tightened_bounds.json").write_text(tight.to_json())
        print(
            f"tightened gap={tight.gap!r} dual_radius={tight.dual_radius!r} "
            f"primal_radius={tight.primal_radius!r}"
        )
    return 0


def cmd_classify(args) -> int:
    (dataset, objective, out, solution, cached, mods,
     view, delta, gap, ctx) = _bound_pipeline(args)
    report = ctx.report("combined")
    queries = dataset if args.queries is None else parse_libsvm(Path(args.queries).read_text())
    verdicts = classify_rows(queries.row_ptr, queries.row_cols, queries.row_vals, report)
    (out / "verdicts.jsonl").write_text(verdicts_to_jsonl(verdicts))
    determined = sum(v.label is not None for v in verdicts)
    print(f"determined {determined}/{len(verdicts)}")
    return 0


def cmd_screen(args) -> int:
    (dataset, objective, out, solution, cached, mods,
     view, delta, gap, ctx) = _bound_pipeline(args)
    idx = screen_samples(delta, cached, gap, objective)
    (out / "screened.json").write_text(
        json.dumps({"gap": gap, "count": int(idx.size), "indices": idx.tolist()})
    )
    print(f"screened {idx.size}/{dataset.n}")
    return 0


def cmd_drift(args) -> int:
    (dataset, objective, out, solution, cached, mods,
     view, delta, gap, ctx) = _bound_pipeline(args)
    report = ctx.report("combined")
    policy = RetrainPolicy(args.theta)
    drift = param_change_upper(report, solution.w)
    retrain = drift >= policy.theta
    (out / "drift.json").write_text(
        json.dumps({"drift_upper": drift, "theta": policy.theta, "retrain": bool(retrain)})
    )
    print(f"drift_upper={drift!r} theta={policy.theta!r} retrain={retrain}")
    return 0


def cmd_experiment(args) -> int:
    config = ExperimentConfig(
        n=args.n,
        d=args.d,
        density=args.density,
        lambdas=_lambdas(args.lam),
        gamma=args.gamma,
        scenarios=tuple(args.scenarios.split(",")),
        magnitudes=tuple(int(m) for m in args.magnitudes.split(",")),
        seeds=tuple(int(s) for s in args.seeds.split(",")),
        theta=args.theta,
        tolerance=args.tolerance,
        measure_time=not args.no_timing,
        oracle_check=args.oracle_check,
    )
    results = run_experiment(config)
    trials_path, agg_path = emit_tables(results, args.out)
    bad = sum(r.bound_violations + r.label_contradictions for r in results)
    print(f"wrote {trials_path} and {agg_path} ({len(results)} trials)")
    if config.oracle_check:
        print(f"oracle violations/contradictions: {bad}")
    return 0 if bad == 0 else 1


def _add_common(p, with_model=True):
    p.add_argument("--data", required=True, help="libsvm path or synthetic:n,d,density")
    p.add_argument("--seed", type=int, default=0, help="seed for synthetic data")
    p.add_argument("--out", required=True, help="artifact directory")
    if with_model:
        p.add_argument("--lambda", dest="lam", default="0.1", help="ridge strength")
        p.add_argument("--gamma", type=float, default=0.5, help="hinge smoothing width")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="deltabound",
        description="certified bounds on retrained linear classifiers after data edits",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train and cache solution statistics")
    _add_common(p)
    p.add_argument("--tolerance", type=float, default=1e-9)
    p.add_argument("--max-epochs", type=int, default=2000)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("stats", help="describe cached statistics")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_stats)

    p = sub.add_parser("modify", help="draw an edit set for a scenario")
    _add_common(p, with_model=False)
    p.add_argument("--scenario", choices=("spot", "instance", "feature"), required=True)
    p.add_argument("--magnitude", type=int, required=True)
    p.add_argument("--mod-seed", type=int, default=0)
    p.set_defaults(fn=cmd_modify)

    p = sub.add_parser("bounds", help="certified coordinate bounds for the edit set")
    _add_common(p)
    p.add_argument("--tighten", action="store_true", help="also run partial re-optimization")
    p.add_argument("--scenario", choices=("spot", "instance", "feature"), default="spot")
    p.set_defaults(fn=cmd_bounds)

    p = sub.add_parser("classify", help="certified labels for query rows")
    _add_common(p)
    p.add_argument("--queries", default=None, help="libsvm path; default: the data rows")
    p.set_defaults(fn=cmd_classify)

    p = sub.add_parser("screen", help="samples provably inactive after the edits")
    _add_common(p)
    p.set_defaults(fn=cmd_screen)

    p = sub.add_parser("drift", help="certified parameter drift and retrain decision")
    _add_common(p)
    p.add_argument("--theta", type=float, required=True)
    p.set_defaults(fn=cmd_drift)

    p = sub.add_parser("experiment", help="full synthetic grid with emitted tables")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--d", type=int, default=200)
    p.add_argument("--density", type=float, default=0.05)
    p.add_argument("--lambda", dest="lam", default="0.001,0.01,0.1,1")
    p.add_argument("--gamma", type=float, default=0.5)
    p.add_argument("--scenarios", default="spot,instance,feature")
    p.add_argument("--magnitudes", default="1,10,100")
    p.add_argument("--seeds", default="0,1,2")
    p.add_argument("--theta", type=float, default=0.1)
    p.add_argument("--tolerance", type=float, default=1e-9)
    p.add_argument("--no-timing", action="store_true", help="zero timing fields, reproducible output")
    p.add_argument("--oracle-check", action="store_true", help="cross-check bounds by exact retrains")
    p.set_defaults(fn=cmd_experiment)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
