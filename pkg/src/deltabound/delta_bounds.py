"""Certified per-coordinate bounds on the re-optimized pair after cell edits.

Given a trained pair with cached statistics and a set of edited cells, the
duality gap of the edited problem evaluated at the old pair is computable
from the touched rows and columns alone.  Strong concavity of the dual and
strong convexity of the primal then confine the edited optima to Euclidean
balls around the old pair, and extremizing linear functionals over those
balls yields closed-form per-coordinate intervals.  Everything here costs
O(|edits|) plus O(1) per touched row/column; producing dense interval
arrays is an optional O(n + d) finishing step.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .objectives import Objective
from .solver import CachedStats, PrimalDualSolution
from .sparse_data import ModificationSet, OverlayView


class BoundConsistencyError(RuntimeError):
    """Two certified intervals for the same coordinate failed to overlap."""


_EMPTY_SLACK = 1e-9


@dataclass
class DeltaStats:
    """Refreshed per-coordinate statistics for touched rows/columns only.

    Values are keyed by row or column index; untouched coordinates keep their
    cached statistics.  ``touched_entries`` counts base-cell and cached-stat
    accesses and is the locality instrument: it depends on the edit set only,
    never on n or d.
    """

    new_row_scores: dict[int, float] = field(default_factory=dict)
    new_row_norms: dict[int, float] = field(default_factory=dict)
    new_col_duals: dict[int, float] = field(default_factory=dict)
    new_col_norms: dict[int, float] = field(default_factory=dict)
    new_col_neg_sums: dict[int, float] = field(default_factory=dict)
    new_col_pos_sums: dict[int, float] = field(default_factory=dict)
    touched_entries: int = 0


def update_delta_stats(
    cached: CachedStats,
    view: OverlayView,
    mods: ModificationSet,
    solution: PrimalDualSolution,
) -> DeltaStats:
    """Refresh dots, norms, and signed column sums for the touched sets.

    Each edit contributes its value displacement to the row score and column
    dual linearly, its squared displacement to the norms, and moves its signed
    entry between the negative/positive column sums.
    """
    base = view.base
    y = base.y
    w = solution.w
    alpha = solution.alpha
    delta = DeltaStats()
    d_score: dict[int, float] = {}
    d_dual: dict[int, float] = {}
    d_row_sq: dict[int, float] = {}
    d_col_sq: dict[int, float] = {}
    d_neg: dict[int, float] = {}
    d_pos: dict[int, float] = {}
    for (i, j), new_v in sorted(mods.edits.items()):
        old_v = base.value(i, j)
        delta.touched_entries += 2  # one base-cell read, one delta compose
        dv = new_v - old_v
        yi = y[i]
        d_score[i] = d_score.get(i, 0.0) + w[j] * yi * dv
        d_dual[j] = d_dual.get(j, 0.0) + alpha[i] * yi * dv
        sq = new_v * new_v - old_v * old_v
        d_row_sq[i] = d_row_sq.get(i, 0.0) + sq
        d_col_sq[j] = d_col_sq.get(j, 0.0) + sq
        z_old = yi * old_v
        z_new = yi * new_v
        dn = d_neg.get(j, 0.0)
        dp = d_pos.get(j, 0.0)
        if z_old < 0.0:
            dn -= z_old
        elif z_old > 0.0:
            dp -= z_old
        if z_new < 0.0:
            dn += z_new
        elif z_new > 0.0:
            dp += z_new
        d_neg[j] = dn
        d_pos[j] = dp
    for i in mods.rows:
        i = int(i)
        delta.touched_entries += 1
        delta.new_row_scores[i] = float(cached.row_scores[i] + d_score.get(i, 0.0))
        delta.new_row_norms[i] = math.sqrt(
            max(0.0, cached.row_norms[i] ** 2 + d_row_sq.get(i, 0.0))
        )
    for j in mods.cols:
        j = int(j)
        delta.touched_entries += 1
        delta.new_col_duals[j] = float(cached.col_duals[j] + d_dual.get(j, 0.0))
        delta.new_col_norms[j] = math.sqrt(
            max(0.0, cached.col_norms[j] ** 2 + d_col_sq.get(j, 0.0))
        )
        delta.new_col_neg_sums[j] = float(cached.col_neg_sums[j] + d_neg.get(j, 0.0))
        delta.new_col_pos_sums[j] = float(cached.col_pos_sums[j] + d_pos.get(j, 0.0))
    return delta


def compute_gap(
    cached: CachedStats,
    delta: DeltaStats,
    mods: ModificationSet,
    solution: PrimalDualSolution,
    objective: Objective,
) -> float:
    """Duality gap of the edited problem at the old pair, never negative.

    Only loss terms of touched rows and penalty-conjugate terms of touched
    columns move; the leftover gap of the original training run is added so
    the result stays an upper bound when the old pair was only approximately
    optimal.
    """
    n = cached.row_scores.shape[0]
    loss = objective.loss
    pen = objective.penalty
    loss_sum = 0.0
    for i in delta.new_row_scores:
        delta.touched_entries += 1
        loss_sum += loss.eval(delta.new_row_scores[i]) - loss.eval(float(cached.row_scores[i]))
    pen_sum = 0.0
    for j in delta.new_col_duals:
        delta.touched_entries += 1
        pen_sum += pen.conj_component(delta.new_col_duals[j] / n) - pen.conj_component(
            float(cached.col_duals[j]) / n
        )
    gap = loss_sum / n + pen_sum + cached.residual_gap
    return max(0.0, gap)


def dual_ball_radius(gap: float, n: int, gamma: float) -> float:
    """Radius of the dual ball: the dual is (gamma/n)-strongly concave."""
    return math.sqrt(2.0 * n * gap / gamma)


def primal_ball_radius(gap: float, lam: float) -> float:
    """Radius of the primal ball: the primal is lam-strongly convex."""
    return math.sqrt(2.0 * gap / lam)


def ball_linear_range(center_dot: float, norm: float, radius: float) -> tuple[float, float]:
    """Range of eta . q over the ball |q - c| <= radius, given eta . c and |eta|."""
    spread = norm * radius
    return center_dot - spread, center_dot + spread


def _ordered(lo: float, hi: float) -> tuple[float, float]:
    """Repair sub-slack inversions from roundoff; larger ones are errors."""
    if lo > hi:
        if lo - hi > _EMPTY_SLACK:
            raise BoundConsistencyError(f"interval [{lo}, {hi}] is empty beyond slack")
        return hi, lo
    return lo, hi


@dataclass
class BoundContext:
    """Lazy interval evaluator around a reference pair with sparse overrides.

    Base arrays come from the cached statistics; dictionaries override the
    touched coordinates.  Any single coordinate interval is O(1), so holding
    a context instead of dense arrays preserves the O(|edits|) cost; dense
    reports are materialized on demand.  ``clamp`` chains in an earlier
    context whose intervals are intersected into the result (used after
    partial re-optimization, where both contexts certify the same optimum).
    """

    objective: Objective
    n: int
    gap: float
    dual_radius: float
    primal_radius: float
    w: np.ndarray
    alpha: np.ndarray
    row_scores: np.ndarray
    row_norms: np.ndarray
    col_duals: np.ndarray
    col_norms: np.ndarray
    col_neg_sums: np.ndarray
    col_pos_sums: np.ndarray
    w_over: dict[int, float] = field(default_factory=dict)
    alpha_over: dict[int, float] = field(default_factory=dict)
    row_score_over: dict[int, float] = field(default_factory=dict)
    row_norm_over: dict[int, float] = field(default_factory=dict)
    col_dual_over: dict[int, float] = field(default_factory=dict)
    col_norm_over: dict[int, float] = field(default_factory=dict)
    col_neg_over: dict[int, float] = field(default_factory=dict)
    col_pos_over: dict[int, float] = field(default_factory=dict)
    clamp: "BoundContext | None" = None

    @property
    def d(self) -> int:
        return int(self.w.shape[0])

    @staticmethod
    def _get(base: np.ndarray, over: dict[int, float], k: int) -> float:
        v = over.get(k)
        return v if v is not None else float(base[k])

    # -- dual-ball side: primal coordinates through the penalty conjugate,
    #    dual coordinates directly, both clipped against the dual domain.

    def w_interval_dual(self, j: int) -> tuple[float, float]:
        dual = self._get(self.col_duals, self.col_dual_over, j)
        norm = self._get(self.col_norms, self.col_norm_over, j)
        neg = self._get(self.col_neg_sums, self.col_neg_over, j)
        pos = self._get(self.col_pos_sums, self.col_pos_over, j)
        lo_dot, hi_dot = ball_linear_range(dual, norm, self.dual_radius)
        lo_arg = max(neg, lo_dot) / self.n
        hi_arg = min(pos, hi_dot) / self.n
        pen = self.objective.penalty
        return pen.conj_subgrad(lo_arg)[0], pen.conj_subgrad(hi_arg)[1]

    def alpha_interval_dual(self, i: int) -> tuple[float, float]:
        a = self._get(self.alpha, self.alpha_over, i)
        lo, hi = self.objective.loss.dual_range
        return max(lo, a - self.dual_radius), min(hi, a + self.dual_radius)

    # -- primal-ball side: primal coordinates directly, dual coordinates
    #    through the negated loss gradient of the score range.

    def w_interval_primal(self, j: int) -> tuple[float, float]:
        wj = self._get(self.w, self.w_over, j)
        return wj - self.primal_radius, wj + self.primal_radius

    def alpha_interval_primal(self, i: int) -> tuple[float, float]:
        s = self._get(self.row_scores, self.row_score_over, i)
        norm = self._get(self.row_norms, self.row_norm_over, i)
        s_lo, s_hi = ball_linear_range(s, norm, self.primal_radius)
        loss = self.objective.loss
        return -loss.subgrad(s_hi)[1], -loss.subgrad(s_lo)[0]

    def w_interval(self, j: int) -> tuple[float, float]:
        lo_d, hi_d = self.w_interval_dual(j)
        lo_p, hi_p = self.w_interval_primal(j)
        lo, hi = max(lo_d, lo_p), min(hi_d, hi_p)
        if self.clamp is not None:
            lo_c, hi_c = self.clamp.w_interval(j)
            lo, hi = max(lo, lo_c), min(hi, hi_c)
        return _ordered(lo, hi)

    def alpha_interval(self, i: int) -> tuple[float, float]:
        lo_d, hi_d = self.alpha_interval_dual(i)
        lo_p, hi_p = self.alpha_interval_primal(i)
        lo, hi = max(lo_d, lo_p), min(hi_d, hi_p)
        if self.clamp is not None:
            lo_c, hi_c = self.clamp.alpha_interval(i)
            lo, hi = max(lo, lo_c), min(hi, hi_c)
        return _ordered(lo, hi)

    # -- dense materialization

    def _full(self, base: np.ndarray, over: dict[int, float]) -> np.ndarray:
        out = base.astype(np.float64, copy=True)
        if over:
            idx = np.fromiter(over.keys(), dtype=np.int64, count=len(over))
            vals = np.fromiter(over.values(), dtype=np.float64, count=len(over))
            out[idx] = vals
        return out

    def _dense_dual(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        duals = self._full(self.col_duals, self.col_dual_over)
        norms = self._full(self.col_norms, self.col_norm_over)
        neg = self._full(self.col_neg_sums, self.col_neg_over)
        pos = self._full(self.col_pos_sums, self.col_pos_over)
        lo_arg = np.maximum(neg, duals - norms * self.dual_radius) / self.n
        hi_arg = np.minimum(pos, duals + norms * self.dual_radius) / self.n
        pen = self.objective.penalty
        w_lo, w_hi = pen.conj_grad_array(lo_arg), pen.conj_grad_array(hi_arg)
        a = self._full(self.alpha, self.alpha_over)
        lo, hi = self.objective.loss.dual_range
        a_lo = np.maximum(lo, a - self.dual_radius)
        a_hi = np.minimum(hi, a + self.dual_radius)
        return w_lo, w_hi, a_lo, a_hi

    def _dense_primal(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        w = self._full(self.w, self.w_over)
        w_lo, w_hi = w - self.primal_radius, w + self.primal_radius
        s = self._full(self.row_scores, self.row_score_over)
        norms = self._full(self.row_norms, self.row_norm_over)
        loss = self.objective.loss
        a_lo = -loss.grad_array(s + norms * self.primal_radius)
        a_hi = -loss.grad_array(s - norms * self.primal_radius)
        return w_lo, w_hi, a_lo, a_hi

    def report(self, case: str = "combined") -> "BoundsReport":
        if case == "dual":
            w_lo, w_hi, a_lo, a_hi = self._dense_dual()
        elif case == "primal":
            w_lo, w_hi, a_lo, a_hi = self._dense_primal()
        elif case == "combined":
            dw_lo, dw_hi, da_lo, da_hi = self._dense_dual()
            pw_lo, pw_hi, pa_lo, pa_hi = self._dense_primal()
            w_lo, w_hi = np.maximum(dw_lo, pw_lo), np.minimum(dw_hi, pw_hi)
            a_lo, a_hi = np.maximum(da_lo, pa_lo), np.minimum(da_hi, pa_hi)
        else:
            raise ValueError(f"unknown case '{case}'")
        if self.clamp is not None:
            prev = self.clamp.report(case)
            w_lo, w_hi = np.maximum(w_lo, prev.w_lower), np.minimum(w_hi, prev.w_upper)
            a_lo, a_hi = np.maximum(a_lo, prev.alpha_lower), np.minimum(a_hi, prev.alpha_upper)
        for lo, hi in ((w_lo, w_hi), (a_lo, a_hi)):
            bad = lo - hi
            if bad.size and float(bad.max(initial=0.0)) > _EMPTY_SLACK:
                k = int(np.argmax(bad))
                raise BoundConsistencyError(
                    f"interval [{lo[k]}, {hi[k]}] is empty beyond slack"
                )
        w_lo, w_hi = np.minimum(w_lo, w_hi), np.maximum(w_lo, w_hi)
        a_lo, a_hi = np.minimum(a_lo, a_hi), np.maximum(a_lo, a_hi)
        return BoundsReport(
            gap=self.gap,
            case=case,
            dual_radius=self.dual_radius,
            primal_radius=self.primal_radius,
            w_lower=w_lo,
            w_upper=w_hi,
            alpha_lower=a_lo,
            alpha_upper=a_hi,
        )

    def touched_to_json(self, mods: ModificationSet) -> str:
        """Sparse serialization: shared radii plus touched-coordinate intervals."""
        w_items = [
            {"j": int(j), "lower": lo, "upper": hi}
            for j in mods.cols
            for lo, hi in (self.w_interval(int(j)),)
        ]
        a_items = [
            {"i": int(i), "lower": lo, "upper": hi}
            for i in mods.rows
            for lo, hi in (self.alpha_interval(int(i)),)
        ]
        return json.dumps(
            {
                "gap": self.gap,
                "case": "combined",
                "dual_radius": self.dual_radius,
                "primal_radius": self.primal_radius,
                "w": w_items,
                "alpha": a_items,
            }
        )


@dataclass(frozen=True)
class BoundsReport:
    """Dense certified intervals for every primal and dual coordinate."""

    gap: float
    case: str
    dual_radius: float
    primal_radius: float
    w_lower: np.ndarray
    w_upper: np.ndarray
    alpha_lower: np.ndarray
    alpha_upper: np.ndarray

    def to_json(self) -> str:
        return json.dumps(
            {
                "gap": self.gap,
                "case": self.case,
                "dual_radius": self.dual_radius,
                "primal_radius": self.primal_radius,
                "w_lower": self.w_lower.tolist(),
                "w_upper": self.w_upper.tolist(),
                "alpha_lower": self.alpha_lower.tolist(),
                "alpha_upper": self.alpha_upper.tolist(),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "BoundsReport":
        obj = json.loads(text)
        return cls(
            gap=float(obj["gap"]),
            case=str(obj["case"]),
            dual_radius=float(obj["dual_radius"]),
            primal_radius=float(obj["primal_radius"]),
            w_lower=np.asarray(obj["w_lower"], dtype=np.float64),
            w_upper=np.asarray(obj["w_upper"], dtype=np.float64),
            alpha_lower=np.asarray(obj["alpha_lower"], dtype=np.float64),
            alpha_upper=np.asarray(obj["alpha_upper"], dtype=np.float64),
        )


def make_context(
    cached: CachedStats,
    solution: PrimalDualSolution,
    objective: Objective,
    delta: DeltaStats | None = None,
    gap: float | None = None,
    clamp: BoundContext | None = None,
) -> BoundContext:
    """Bound context for the edited problem at the (unmodified) trained pair."""
    if gap is None:
        gap = max(0.0, cached.residual_gap)
    n = int(cached.row_scores.shape[0])
    ctx = BoundContext(
        objective=objective,
        n=n,
        gap=gap,
        dual_radius=dual_ball_radius(gap, n, objective.loss.gamma),
        primal_radius=primal_ball_radius(gap, objective.penalty.lam),
        w=solution.w,
        alpha=solution.alpha,
        row_scores=cached.row_scores,
        row_norms=cached.row_norms,
        col_duals=cached.col_duals,
        col_norms=cached.col_norms,
        col_neg_sums=cached.col_neg_sums,
        col_pos_sums=cached.col_pos_sums,
        clamp=clamp,
    )
    if delta is not None:
        ctx.row_score_over = dict(delta.new_row_scores)
        ctx.row_norm_over = dict(delta.new_row_norms)
        ctx.col_dual_over = dict(delta.new_col_duals)
        ctx.col_norm_over = dict(delta.new_col_norms)
        ctx.col_neg_over = dict(delta.new_col_neg_sums)
        ctx.col_pos_over = dict(delta.new_col_pos_sums)
    return ctx


def evaluate_bounds(
    cached: CachedStats,
    solution: PrimalDualSolution,
    objective: Objective,
    view: OverlayView,
    mods: ModificationSet,
) -> tuple[DeltaStats, float, BoundContext]:
    """The full edit-local pipeline: refreshed stats, gap, bound context."""
    delta = update_delta_stats(cached, view, mods, solution)
    gap = compute_gap(cached, delta, mods, solution, objective)
    return delta, gap, make_context(cached, solution, objective, delta, gap)


def dual_sphere_bounds(
    gap: float,
    delta: DeltaStats | None,
    cached: CachedStats,
    solution: PrimalDualSolution,
    objective: Objective,
) -> BoundsReport:
    return make_context(cached, solution, objective, delta, gap).report("dual")


def primal_sphere_bounds(
    gap: float,
    delta: DeltaStats | None,
    cached: CachedStats,
    solution: PrimalDualSolution,
    objective: Objective,
) -> BoundsReport:
    return make_context(cached, solution, objective, delta, gap).report("primal")


def combine_bounds(first: BoundsReport, second: BoundsReport) -> BoundsReport:
    """Coordinate-wise intersection of two reports certifying the same optima."""
    w_lo = np.maximum(first.w_lower, second.w_lower)
    w_hi = np.minimum(first.w_upper, second.w_upper)
    a_lo = np.maximum(first.alpha_lower, second.alpha_lower)
    a_hi = np.minimum(first.alpha_upper, second.alpha_upper)
    for lo, hi in ((w_lo, w_hi), (a_lo, a_hi)):
        bad = lo - hi
        if bad.size and float(bad.max(initial=0.0)) > _EMPTY_SLACK:
            k = int(np.argmax(bad))
            raise BoundConsistencyError(f"interval [{lo[k]}, {hi[k]}] is empty beyond slack")
    return BoundsReport(
        gap=min(first.gap, second.gap),
        case="combined",
        dual_radius=min(first.dual_radius, second.dual_radius),
        primal_radius=min(first.primal_radius, second.primal_radius),
        w_lower=np.minimum(w_lo, w_hi),
        w_upper=np.maximum(w_lo, w_hi),
        alpha_lower=np.minimum(a_lo, a_hi),
        alpha_upper=np.maximum(a_lo, a_hi),
    )
