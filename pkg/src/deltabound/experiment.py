"""Synthetic end-to-end harness: edits, bounds, decisions, retrain comparison.

One trial edits a trained problem under a scenario (scattered cells, whole
rows, whole columns), runs the edit-local bound pipeline plus the partial
re-optimization pass, makes the certified decisions, then actually retrains
to measure cost; optional high-precision retrains cross-check that the
certificates hold.  Timing is optional so the emitted tables can be exactly
reproducible byte for byte.
"""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .decisions import (
    RetrainPolicy,
    classify_rows,
    param_change_upper,
    screen_samples,
)
from .delta_bounds import DeltaStats, evaluate_bounds
from .objectives import Objective, make_objective
from .partial_opt import PartialPlan, optimize_plan, tightened_bounds, tightened_gap
from .solver import CachedStats, PrimalDualSolution, train
from .sparse_data import (
    ModificationSet,
    OverlayView,
    SparseDataset,
    apply_modifications,
    normalize_rows,
    split_train_test,
)


@dataclass(frozen=True)
class ExperimentConfig:
    n: int = 2000
    d: int = 200
    density: float = 0.05
    lambdas: tuple[float, ...] = (0.001, 0.01, 0.1, 1.0)
    gamma: float = 0.5
    scenarios: tuple[str, ...] = ("spot", "instance", "feature")
    magnitudes: tuple[int, ...] = (1, 10, 100)
    seeds: tuple[int, ...] = (0, 1, 2)
    theta: float = 0.1
    tolerance: float = 1e-9
    max_epochs: int = 2000
    test_fraction: float = 0.2
    measure_time: bool = True
    oracle_check: bool = False
    oracle_tolerance: float = 1e-14


@dataclass(frozen=True)
class TrialResult:
    scenario: str
    magnitude: int
    lam: float
    seed: int
    edits: int
    gap: float
    dual_radius: float
    primal_radius: float
    determination_rate: float
    drift_upper: float
    retrain_flag: bool
    screened: int
    tight_gap: float
    tight_determination_rate: float
    tight_drift_upper: float
    tight_retrain_flag: bool
    tight_screened: int
    primal_delta: float
    dual_delta: float
    bound_time: float
    retrain_time: float
    time_ratio: float
    converged: bool
    bound_violations: int
    label_contradictions: int


def synthetic_dataset(n: int, d: int, density: float, seed: int) -> SparseDataset:
    """Sparse features uniform in [-1, 1], labels from a noisy random halfspace."""
    if not 0.0 < density <= 1.0:
        raise ValueError("density must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    if n * d <= 4_000_000:
        rows, cols = np.nonzero(rng.random((n, d)) < density)
    else:
        # sample flat positions with replacement, dedupe; density is approximate
        nnz = int(rng.binomial(n * d, density))
        flat = np.unique(rng.integers(0, n * d, size=nnz))
        rows, cols = np.divmod(flat, d)
    vals = rng.uniform(-1.0, 1.0, size=rows.size)
    vals[vals == 0.0] = 0.5
    w_true = rng.standard_normal(d)
    s = np.zeros(n)
    np.add.at(s, rows, vals * w_true[cols])
    y = np.where(s >= 0.0, 1, -1).astype(np.int8)
    flip = rng.random(n) < 0.1
    y[flip] = -y[flip]
    return SparseDataset.from_cells(n, d, rows, cols, vals, y)


def feature_value_ranges(dataset: SparseDataset) -> np.ndarray:
    """Per-column [min, max] over all n cells, implicit zeros included."""
    out = np.zeros((dataset.d, 2))
    n = dataset.n
    for j in range(dataset.d):
        sl = dataset.col_vals[dataset.col_ptr[j] : dataset.col_ptr[j + 1]]
        if sl.size:
            lo, hi = float(sl.min()), float(sl.max())
            if sl.size < n:
                lo, hi = min(lo, 0.0), max(hi, 0.0)
            out[j, 0], out[j, 1] = lo, hi
    return out


def generate_modifications(
    dataset: SparseDataset, scenario: str, magnitude: int, seed: int | np.random.Generator
) -> ModificationSet:
    """Draw an edit set for a scenario; new values land in the column's range.

    spot: ``magnitude`` distinct cells anywhere in the matrix.
    instance: every stored cell of ``magnitude`` distinct rows.
    feature: every stored cell of ``magnitude`` distinct columns.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    n, d = dataset.n, dataset.d
    if magnitude < 0:
        raise ValueError("magnitude must be nonnegative")
    if magnitude == 0:
        return ModificationSet.from_triples([])
    ranges = feature_value_ranges(dataset)
    cells: list[tuple[int, int]] = []
    if scenario == "spot":
        if magnitude > n * d:
            raise ValueError(f"cannot pick {magnitude} distinct cells from {n}x{d}")
        seen: set = set()
        while len(seen) < magnitude:
            for f in rng.integers(0, n * d, size=2 * (magnitude - len(seen)) + 8):
                if len(seen) >= magnitude:
                    break
                seen.add(int(f))
        cells = [divmod(f, d) for f in sorted(seen)]
    elif scenario == "instance":
        if magnitude > n:
            raise ValueError(f"cannot pick {magnitude} distinct rows from {n}")
        picked = rng.choice(n, size=magnitude, replace=False)
        for i in sorted(int(i) for i in picked):
            cols_i, _ = dataset.row(i)
            cells.extend((i, int(j)) for j in cols_i)
    elif scenario == "feature":
        if magnitude > d:
            raise ValueError(f"cannot pick {magnitude} distinct columns from {d}")
        picked = rng.choice(d, size=magnitude, replace=False)
        for j in sorted(int(j) for j in picked):
            rows_j, _ = dataset.col(j)
            cells.extend((int(i), j) for i in rows_j)
    else:
        raise ValueError(f"unknown scenario '{scenario}'")
    triples = []
    for i, j in cells:
        lo, hi = ranges[j]
        triples.append((i, j, float(rng.uniform(lo, hi)) if hi > lo else float(lo)))
    return ModificationSet.from_triples(triples)


def make_problem(config: ExperimentConfig, seed: int) -> tuple[SparseDataset, SparseDataset]:
    full = normalize_rows(synthetic_dataset(config.n, config.d, config.density, seed))
    test, train_ds = split_train_test(full, config.test_fraction, seed)
    return train_ds, test


def run_trial(
    config: ExperimentConfig,
    train_ds: SparseDataset,
    test_ds: SparseDataset,
    objective: Objective,
    solution: PrimalDualSolution,
    cached: CachedStats,
    scenario: str,
    magnitude: int,
    seed: int,
) -> TrialResult:
    mods = generate_modifications(train_ds, scenario, magnitude, seed)
    policy = RetrainPolicy(config.theta)

    def bound_pass():
        view = OverlayView(train_ds, mods)
        delta, gap, ctx = evaluate_bounds(cached, solution, objective, view, mods)
        return view, delta, gap, ctx, ctx.report("combined")

    bound_time = 0.0
    if config.measure_time:
        best = np.inf
        for _ in range(3):
            t0 = time.perf_counter()
            view, delta, gap, ctx, report = bound_pass()
            best = min(best, time.perf_counter() - t0)
        bound_time = float(best)
    else:
        view, delta, gap, ctx, report = bound_pass()

    verdicts = classify_rows(test_ds.row_ptr, test_ds.row_cols, test_ds.row_vals, report)
    det_rate = sum(v.label is not None for v in verdicts) / max(1, len(verdicts))
    drift = param_change_upper(report, solution.w)
    screened = screen_samples(delta, cached, gap, objective)

    plan = PartialPlan(scenario)
    check = optimize_plan(view, objective, solution, cached, delta, plan, mods, gap)
    if check is None:
        tight_report, tight_gap = report, gap
        tight_screened = screened
        primal_delta = dual_delta = 0.0
    else:
        tight_report = tightened_bounds(check, mods, objective, cached, delta)
        tight_gap = tightened_gap(check)
        tight_delta = DeltaStats(
            new_row_scores=dict(check.row_score_over),
            new_row_norms=dict(delta.new_row_norms),
        )
        # both passes certify zero duals, so the union is certified too
        tight_screened = np.union1d(
            screened, screen_samples(tight_delta, cached, tight_gap, objective)
        )
        primal_delta, dual_delta = check.primal_delta, check.dual_delta
    tight_verdicts = classify_rows(
        test_ds.row_ptr, test_ds.row_cols, test_ds.row_vals, tight_report
    )
    tight_det = sum(v.label is not None for v in tight_verdicts) / max(1, len(tight_verdicts))
    tight_drift = param_change_upper(tight_report, solution.w)

    applied = apply_modifications(train_ds, mods)
    retrain_time = 0.0
    if config.measure_time:
        t0 = time.perf_counter()
        new_sol, _ = train(
            applied, objective, tolerance=config.tolerance,
            max_epochs=config.max_epochs, alpha0=solution.alpha,
        )
        retrain_time = float(time.perf_counter() - t0)
        ratio = bound_time / retrain_time if retrain_time > 0.0 else 0.0
    else:
        new_sol, _ = train(
            applied, objective, tolerance=config.tolerance,
            max_epochs=config.max_epochs, alpha0=solution.alpha,
        )
        ratio = 0.0

    violations = 0
    contradictions = 0
    if config.oracle_check:
        exact, _ = train(
            applied, objective, tolerance=config.oracle_tolerance,
            max_epochs=50 * config.max_epochs, alpha0=new_sol.alpha,
        )
        for rep in (report, tight_report):
            violations += int(np.sum(exact.w < rep.w_lower - 1e-12))
            violations += int(np.sum(exact.w > rep.w_upper + 1e-12))
            violations += int(np.sum(exact.alpha < rep.alpha_lower - 1e-12))
            violations += int(np.sum(exact.alpha > rep.alpha_upper + 1e-12))
        true_scores = np.zeros(test_ds.n)
        cs = np.concatenate(([0.0], np.cumsum(test_ds.row_vals * exact.w[test_ds.row_cols])))
        true_scores = cs[test_ds.row_ptr[1:]] - cs[test_ds.row_ptr[:-1]]
        for vset in (verdicts, tight_verdicts):
            for v, s in zip(vset, true_scores):
                if v.label is not None and v.label != (1 if s >= 0.0 else -1):
                    contradictions += 1

    return TrialResult(
        scenario=scenario,
        magnitude=magnitude,
        lam=objective.penalty.lam,
        seed=seed,
        edits=len(mods),
        gap=float(gap),
        dual_radius=float(report.dual_radius),
        primal_radius=float(report.primal_radius),
        determination_rate=float(det_rate),
        drift_upper=float(drift),
        retrain_flag=bool(drift >= policy.theta),
        screened=int(np.size(screened)),
        tight_gap=float(tight_gap),
        tight_determination_rate=float(tight_det),
        tight_drift_upper=float(tight_drift),
        tight_retrain_flag=bool(tight_drift >= policy.theta),
        tight_screened=int(np.size(tight_screened)),
        primal_delta=float(primal_delta),
        dual_delta=float(dual_delta),
        bound_time=bound_time,
        retrain_time=retrain_time,
        time_ratio=float(ratio),
        converged=bool(solution.converged and new_sol.converged),
        bound_violations=violations,
        label_contradictions=contradictions,
    )


def run_experiment(config: ExperimentConfig) -> list[TrialResult]:
    results = []
    for seed in config.seeds:
        train_ds, test_ds = make_problem(config, seed)
        for lam in config.lambdas:
            objective = make_objective(lam, config.gamma)
            solution, cached = train(
                train_ds, objective, tolerance=config.tolerance, max_epochs=config.max_epochs
            )
            for scenario in config.scenarios:
                for magnitude in config.magnitudes:
                    results.append(
                        run_trial(
                            config, train_ds, test_ds, objective, solution, cached,
                            scenario, magnitude, seed,
                        )
                    )
    return results


_CSV_FIELDS = [f.name for f in fields(TrialResult)]


def _csv_cell(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def emit_tables(results: list[TrialResult], out_dir: str | Path) -> tuple[Path, Path]:
    """trials.csv (one sorted row per trial) and aggregates.json (grouped stats).

    Output is deterministic: rows sorted by trial key, floats via repr,
    aggregate keys sorted.  With measure_time off the tables are exactly
    reproducible byte for byte.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = sorted(results, key=lambda r: (r.scenario, r.magnitude, r.lam, r.seed))
    lines = [",".join(_CSV_FIELDS)]
    for r in rows:
        lines.append(",".join(_csv_cell(getattr(r, name)) for name in _CSV_FIELDS))
    trials_path = out / "trials.csv"
    trials_path.write_text("\n".join(lines) + "\n")

    groups: dict[str, list[TrialResult]] = {}
    for r in rows:
        if not r.converged:
            continue
        groups.setdefault(f"{r.scenario}|m={r.magnitude}|lam={r.lam!r}", []).append(r)
    agg = {}
    stat_fields = (
        "gap", "determination_rate", "tight_determination_rate", "drift_upper",
        "tight_drift_upper", "screened", "tight_screened", "time_ratio",
    )
    for key, rs in groups.items():
        entry = {"trials": len(rs)}
        for name in stat_fields:
            vals = [float(getattr(r, name)) for r in rs]
            entry[name] = {
                "mean": sum(vals) / len(vals),
                "min": min(vals),
                "max": max(vals),
            }
        agg[key] = entry
    agg_path = out / "aggregates.json"
    agg_path.write_text(json.dumps(agg, sort_keys=True, indent=2) + "\n")
    return trials_path, agg_path
