"""Coordinate-subset re-optimization that provably shrinks the certified gap.

Optimizing the edited primal over the touched columns (and the edited dual
over the touched rows) costs only passes over those slices, yet every unit
of objective progress subtracts one-for-one from the certified gap, so all
ball radii shrink.  The resulting bounds are intersected with the pre-pass
bounds: both certify the same optimum, and the intersection is what makes
the tightening monotone coordinate-wise.

Primal coordinate steps are exact: the 1-D restriction is a convex piecewise
quadratic whose derivative is continuous piecewise affine, so the minimizer
is found by sweeping the region-crossing breakpoints of the touched rows.
Dual coordinate steps reuse the solver's closed-form clipped update.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from numba import njit

from .delta_bounds import (
    BoundConsistencyError,
    BoundContext,
    BoundsReport,
    DeltaStats,
    dual_ball_radius,
    make_context,
    primal_ball_radius,
)
from .objectives import Objective
from .solver import CachedStats, PrimalDualSolution
from .sparse_data import ModificationSet, OverlayView

SCENARIOS = ("spot", "instance", "feature")


@dataclass(frozen=True)
class PartialPlan:
    """Which side(s) to re-optimize for a scenario, and the effort budget.

    progress_tol of None means 1e-10 * (1 + |starting objective|), decided
    when the optimization runs.
    """

    scenario: str
    max_passes: int = 20
    progress_tol: float | None = None

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario '{self.scenario}'")
        if self.max_passes < 1:
            raise ValueError("max_passes must be at least 1")

    def to_json(self) -> str:
        return json.dumps(
            {
                "scenario": self.scenario,
                "max_passes": self.max_passes,
                "progress_tol": self.progress_tol,
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "PartialPlan":
        obj = json.loads(text)
        tol = obj.get("progress_tol")
        return cls(
            scenario=str(obj["scenario"]),
            max_passes=int(obj.get("max_passes", 20)),
            progress_tol=None if tol is None else float(tol),
        )


def plan_targets(plan: PartialPlan, mods: ModificationSet) -> tuple[list[int], list[int]]:
    """(columns to optimize, rows to optimize) for the plan's scenario.

    Spot edits touch few cells on both axes, so both sides pay off; instance
    edits concentrate in rows (dual side), feature edits in columns (primal
    side).
    """
    cols = [int(j) for j in mods.cols]
    rows = [int(i) for i in mods.rows]
    if plan.scenario == "spot":
        return cols, rows
    if plan.scenario == "instance":
        return [], rows
    return cols, []


@dataclass
class CheckSolution:
    """A feasible pair that improves on the trained pair for the edited data.

    ``w`` differs from the base only on the optimized columns, ``alpha`` only
    on the optimized rows.  ``row_score_over``/``col_dual_over`` hold the dots
    that differ from the cached statistics (touched by edits or by the
    optimization), so bound evaluation stays slice-local.  primal_delta <= 0
    and dual_delta >= 0 are exact telescoped objective changes.
    """

    w: np.ndarray
    alpha: np.ndarray
    primal_delta: float
    dual_delta: float
    base_gap: float
    row_score_over: dict[int, float]
    col_dual_over: dict[int, float]
    optimized_cols: frozenset
    optimized_rows: frozenset
    base: PrimalDualSolution


def _merged_nonzero(view: OverlayView, kind: str, k: int) -> tuple[np.ndarray, np.ndarray]:
    idx, vals = (view.col(k) if kind == "col" else view.row(k))
    keep = vals != 0.0
    return idx[keep], vals[keep]


def partial_primal_optimize(
    view: OverlayView,
    objective: Objective,
    solution: PrimalDualSolution,
    cached: CachedStats,
    delta: DeltaStats,
    cols: list[int],
    gap: float,
    max_passes: int = 20,
    progress_tol: float | None = None,
) -> CheckSolution:
    """Exact cyclic coordinate descent of the edited primal over ``cols``."""
    if not cols:
        raise ValueError("no columns to optimize")
    loss = objective.loss
    pen = objective.penalty
    n = view.n
    lam = pen.lam
    gamma = loss.gamma
    y = view.y
    w_check = solution.w.astype(np.float64, copy=True)
    scores = cached.row_scores.astype(np.float64, copy=True)
    for i, s in delta.new_row_scores.items():
        scores[i] = s
    touched_rows = set(delta.new_row_scores)
    columns = []
    for j in sorted(set(int(c) for c in cols)):
        rows_j, vals_j = _merged_nonzero(view, "col", j)
        columns.append((j, rows_j, vals_j * y[rows_j]))
        touched_rows.update(int(r) for r in rows_j)
    if progress_tol is None:
        p_start = float(loss.eval_array(scores).sum() / n + pen.eval(w_check))
        progress_tol = 1e-10 * (1.0 + abs(p_start))
    primal_delta = 0.0
    for _ in range(max_passes):
        pass_gain = 0.0
        for j, rows_j, zv in columns:
            t0 = float(w_check[j])
            if zv.size == 0:
                t_star = 0.0
                d_obj = pen.component(0.0) - pen.component(t0)
            else:
                s = scores[rows_j]
                t_star = _piecewise_line_min(s, zv, t0, n, lam, gamma)
                s_new = s + zv * (t_star - t0)
                d_obj = float(
                    (loss.eval_array(s_new) - loss.eval_array(s)).sum() / n
                    + pen.component(t_star)
                    - pen.component(t0)
                )
            if d_obj >= 0.0 or t_star == t0:
                continue  # no exact progress (roundoff); leave the coordinate
            if zv.size:
                scores[rows_j] = s_new
            w_check[j] = t_star
            primal_delta += d_obj
            pass_gain -= d_obj
        if pass_gain < progress_tol:
            break
    return CheckSolution(
        w=w_check,
        alpha=solution.alpha,
        primal_delta=primal_delta,
        dual_delta=0.0,
        base_gap=gap,
        row_score_over={i: float(scores[i]) for i in touched_rows},
        col_dual_over=dict(delta.new_col_duals),
        optimized_cols=frozenset(j for j, _, _ in columns),
        optimized_rows=frozenset(),
        base=solution,
    )


def _piecewise_line_min(s, zv, t0, n, lam, gamma):
    """Exact minimizer of t -> n^-1 sum_i phi(s_i + zv_i (t - t0)) + lam t^2 / 2.

    The derivative is continuous, nondecreasing, and affine between the
    points where some row crosses a loss-region boundary; accumulate those
    crossings in order and solve the affine piece that brackets zero.
    """
    t_at_flat = t0 + (1.0 - s) / zv
    t_at_lin = t0 + (1.0 - gamma - s) / zv
    a_mid = zv * zv / (n * gamma)
    b_mid = zv * (s - zv * t0 - 1.0) / (n * gamma)
    b_lin = -zv / n
    pos = zv > 0.0
    enter_t = np.where(pos, t_at_lin, t_at_flat)
    enter_da = a_mid
    enter_db = b_mid - np.where(pos, b_lin, 0.0)
    leave_t = np.where(pos, t_at_flat, t_at_lin)
    leave_da = -a_mid
    leave_db = -b_mid + np.where(pos, 0.0, b_lin)
    ts = np.concatenate((enter_t, leave_t))
    das = np.concatenate((enter_da, leave_da))
    dbs = np.concatenate((enter_db, leave_db))
    order = np.argsort(ts, kind="stable")
    ts = ts[order]
    a_seg = lam + np.concatenate(([0.0], np.cumsum(das[order])))
    b_seg = float(b_lin[pos].sum()) + np.concatenate(([0.0], np.cumsum(dbs[order])))
    roots = -b_seg / a_seg
    right = np.append(ts, np.inf)
    k = int(np.argmax(roots <= right))
    t_star = float(roots[k])
    if k > 0:
        t_star = max(t_star, float(ts[k - 1]))  # continuity guard for roundoff
    return t_star


@njit(cache=True)
def _partial_dual_pass(
    sub_ptr, sub_cols, sub_vals, sub_y, sub_alpha, w_aux, gamma, inv_nlam, n, col_touched
):
    gain = 0.0
    for t in range(sub_ptr.shape[0] - 1):
        s = 0.0
        q = 0.0
        for p in range(sub_ptr[t], sub_ptr[t + 1]):
            v = sub_vals[p]
            s += v * w_aux[sub_cols[p]]
            q += v * v
        s *= sub_y[t]
        denom = gamma + q * inv_nlam
        delta = (1.0 - s - gamma * sub_alpha[t]) / denom
        new_a = sub_alpha[t] + delta
        if new_a < 0.0:
            new_a = 0.0
        elif new_a > 1.0:
            new_a = 1.0
        step = new_a - sub_alpha[t]
        if step != 0.0:
            gain += (step * (1.0 - gamma * sub_alpha[t] - s) - 0.5 * step * step * denom) / n
            sub_alpha[t] = new_a
            c = step * inv_nlam * sub_y[t]
            for p in range(sub_ptr[t], sub_ptr[t + 1]):
                w_aux[sub_cols[p]] += c * sub_vals[p]
                col_touched[sub_cols[p]] = True
    return gain


def partial_dual_optimize(
    view: OverlayView,
    objective: Objective,
    solution: PrimalDualSolution,
    cached: CachedStats,
    delta: DeltaStats,
    rows: list[int],
    gap: float,
    max_passes: int = 20,
    progress_tol: float | None = None,
) -> CheckSolution:
    """Clipped closed-form dual ascent of the edited dual over ``rows``."""
    if not rows:
        raise ValueError("no rows to optimize")
    n = view.n
    lam = objective.penalty.lam
    gamma = objective.loss.gamma
    inv_nlam = 1.0 / (n * lam)
    y = view.y
    row_list = sorted(set(int(r) for r in rows))
    ptr = [0]
    cols_parts, vals_parts = [], []
    for i in row_list:
        cols_i, vals_i = _merged_nonzero(view, "row", i)
        cols_parts.append(cols_i.astype(np.int64))
        vals_parts.append(vals_i)
        ptr.append(ptr[-1] + cols_i.size)
    sub_ptr = np.asarray(ptr, dtype=np.int64)
    sub_cols = (
        np.concatenate(cols_parts) if cols_parts else np.empty(0, dtype=np.int64)
    )
    sub_vals = np.concatenate(vals_parts) if vals_parts else np.empty(0)
    sub_y = y[np.asarray(row_list, dtype=np.int64)]
    # aux primal image of alpha on the edited data, kept exact per step
    w_aux = solution.w.astype(np.float64, copy=True)
    for (i, j), new_v in sorted(view.delta.edits.items()):
        old_v = view.base.value(i, j)
        w_aux[j] += inv_nlam * solution.alpha[i] * y[i] * (new_v - old_v)
    alpha_check = solution.alpha.astype(np.float64, copy=True)
    sub_alpha = alpha_check[np.asarray(row_list, dtype=np.int64)].copy()
    if progress_tol is None:
        dual_sum = float(np.sum(alpha_check - 0.5 * gamma * alpha_check * alpha_check))
        d_start = dual_sum / n - 0.5 * lam * float(np.dot(w_aux, w_aux))
        progress_tol = 1e-10 * (1.0 + abs(d_start))
    col_touched = np.zeros(view.d, dtype=np.bool_)
    dual_delta = 0.0
    for _ in range(max_passes):
        gain = _partial_dual_pass(
            sub_ptr, sub_cols, sub_vals, sub_y, sub_alpha, w_aux,
            gamma, inv_nlam, n, col_touched,
        )
        dual_delta += gain
        if gain < progress_tol:
            break
    alpha_check[np.asarray(row_list, dtype=np.int64)] = sub_alpha
    nlam = n * lam
    col_dual_over = dict(delta.new_col_duals)
    for j in np.nonzero(col_touched)[0]:
        col_dual_over[int(j)] = float(w_aux[j] * nlam)
    return CheckSolution(
        w=solution.w,
        alpha=alpha_check,
        primal_delta=0.0,
        dual_delta=dual_delta,
        base_gap=gap,
        row_score_over=dict(delta.new_row_scores),
        col_dual_over=col_dual_over,
        optimized_cols=frozenset(),
        optimized_rows=frozenset(row_list),
        base=solution,
    )


def optimize_plan(
    view: OverlayView,
    objective: Objective,
    solution: PrimalDualSolution,
    cached: CachedStats,
    delta: DeltaStats,
    plan: PartialPlan,
    mods: ModificationSet,
    gap: float,
) -> CheckSolution | None:
    """Run the plan's sides (primal first, both from the trained pair).

    The two sides are independent: each optimizes against the frozen trained
    counterpart, so their objective deltas add.  Returns None when the edit
    set gives the plan nothing to optimize.
    """
    cols, rows = plan_targets(plan, mods)
    primal_cs = (
        partial_primal_optimize(
            view, objective, solution, cached, delta, cols, gap,
            plan.max_passes, plan.progress_tol,
        )
        if cols
        else None
    )
    dual_cs = (
        partial_dual_optimize(
            view, objective, solution, cached, delta, rows, gap,
            plan.max_passes, plan.progress_tol,
        )
        if rows
        else None
    )
    if primal_cs is None and dual_cs is None:
        return None
    if primal_cs is None:
        return dual_cs
    if dual_cs is None:
        return primal_cs
    return CheckSolution(
        w=primal_cs.w,
        alpha=dual_cs.alpha,
        primal_delta=primal_cs.primal_delta,
        dual_delta=dual_cs.dual_delta,
        base_gap=gap,
        row_score_over=primal_cs.row_score_over,
        col_dual_over=dual_cs.col_dual_over,
        optimized_cols=primal_cs.optimized_cols,
        optimized_rows=dual_cs.optimized_rows,
        base=solution,
    )


def tightened_gap(check: CheckSolution) -> float:
    """Gap at the check pair via the telescoped objective deltas."""
    shift = check.primal_delta - check.dual_delta
    if shift > 1e-12:
        raise BoundConsistencyError(
            f"partial optimization increased the gap by {shift}"
        )
    return max(0.0, check.base_gap + shift)


def tightened_context(
    check: CheckSolution,
    mods: ModificationSet,
    objective: Objective,
    cached: CachedStats,
    delta: DeltaStats,
) -> BoundContext:
    """Bound context at the check pair, clamped by the pre-pass context."""
    base_ctx = make_context(cached, check.base, objective, delta, check.base_gap)
    gap = tightened_gap(check)
    n = int(cached.row_scores.shape[0])
    return BoundContext(
        objective=objective,
        n=n,
        gap=gap,
        dual_radius=dual_ball_radius(gap, n, objective.loss.gamma),
        primal_radius=primal_ball_radius(gap, objective.penalty.lam),
        w=check.w,
        alpha=check.alpha,
        row_scores=cached.row_scores,
        row_norms=cached.row_norms,
        col_duals=cached.col_duals,
        col_norms=cached.col_norms,
        col_neg_sums=cached.col_neg_sums,
        col_pos_sums=cached.col_pos_sums,
        row_score_over=dict(check.row_score_over),
        row_norm_over=dict(delta.new_row_norms),
        col_dual_over=dict(check.col_dual_over),
        col_norm_over=dict(delta.new_col_norms),
        col_neg_over=dict(delta.new_col_neg_sums),
        col_pos_over=dict(delta.new_col_pos_sums),
        clamp=base_ctx,
    )


def tightened_bounds(
    check: CheckSolution,
    mods: ModificationSet,
    objective: Objective,
    cached: CachedStats,
    delta: DeltaStats,
) -> BoundsReport:
    return tightened_context(check, mods, objective, cached, delta).report("combined")
