"""Dual coordinate ascent trainer with gap certificates and cached statistics.

The trainer maintains the linkage w = (n lam)^-1 Z^T alpha after every
coordinate step, so the primal iterate is always the image of the dual one
and the duality gap is computable in one data pass.  Each coordinate update
is the exact 1-D maximizer of the dual, clipped to [0, 1].
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from numba import njit

from .objectives import INFEASIBLE, Objective
from .sparse_data import SparseDataset


@njit(cache=True)
def _cd_epoch(row_ptr, row_cols, row_vals, y, alpha, w, gamma, inv_nlam, order):
    for t in range(order.shape[0]):
        i = order[t]
        s = 0.0
        q = 0.0
        for p in range(row_ptr[i], row_ptr[i + 1]):
            v = row_vals[p]
            s += v * w[row_cols[p]]
            q += v * v
        s *= y[i]
        delta = (1.0 - s - gamma * alpha[i]) / (gamma + q * inv_nlam)
        new_a = alpha[i] + delta
        if new_a < 0.0:
            new_a = 0.0
        elif new_a > 1.0:
            new_a = 1.0
        step = new_a - alpha[i]
        if step != 0.0:
            alpha[i] = new_a
            c = step * inv_nlam * y[i]
            for p in range(row_ptr[i], row_ptr[i + 1]):
                w[row_cols[p]] += c * row_vals[p]


@njit(cache=True)
def _primal_dual(row_ptr, row_cols, row_vals, y, w, alpha, gamma, lam):
    """(P, D) assuming w is the penalty-conjugate image of alpha."""
    n = alpha.shape[0]
    loss_sum = 0.0
    for i in range(n):
        s = 0.0
        for p in range(row_ptr[i], row_ptr[i + 1]):
            s += row_vals[p] * w[row_cols[p]]
        s *= y[i]
        if s > 1.0:
            pass
        elif s < 1.0 - gamma:
            loss_sum += 1.0 - s - gamma / 2.0
        else:
            loss_sum += (1.0 - s) * (1.0 - s) / (2.0 * gamma)
    wsq = 0.0
    for j in range(w.shape[0]):
        wsq += w[j] * w[j]
    dual_sum = 0.0
    for i in range(n):
        dual_sum += alpha[i] - 0.5 * gamma * alpha[i] * alpha[i]
    p_val = loss_sum / n + 0.5 * lam * wsq
    d_val = dual_sum / n - 0.5 * lam * wsq
    return p_val, d_val


@njit(cache=True)
def _row_scores(row_ptr, row_cols, row_vals, y, w):
    n = row_ptr.shape[0] - 1
    out = np.empty(n)
    for i in range(n):
        s = 0.0
        for p in range(row_ptr[i], row_ptr[i + 1]):
            s += row_vals[p] * w[row_cols[p]]
        out[i] = s * y[i]
    return out


@njit(cache=True)
def _row_norms(row_ptr, row_vals):
    n = row_ptr.shape[0] - 1
    out = np.empty(n)
    for i in range(n):
        q = 0.0
        for p in range(row_ptr[i], row_ptr[i + 1]):
            q += row_vals[p] * row_vals[p]
        out[i] = np.sqrt(q)
    return out


@njit(cache=True)
def _col_duals(col_ptr, col_rows, col_vals, y, alpha):
    d = col_ptr.shape[0] - 1
    out = np.empty(d)
    for j in range(d):
        s = 0.0
        for p in range(col_ptr[j], col_ptr[j + 1]):
            i = col_rows[p]
            s += col_vals[p] * y[i] * alpha[i]
        out[j] = s
    return out


@njit(cache=True)
def _col_norms(col_ptr, col_vals):
    d = col_ptr.shape[0] - 1
    out = np.empty(d)
    for j in range(d):
        q = 0.0
        for p in range(col_ptr[j], col_ptr[j + 1]):
            q += col_vals[p] * col_vals[p]
        out[j] = np.sqrt(q)
    return out


@njit(cache=True)
def _col_signed_sums(col_ptr, col_rows, col_vals, y):
    d = col_ptr.shape[0] - 1
    neg = np.zeros(d)
    pos = np.zeros(d)
    for j in range(d):
        for p in range(col_ptr[j], col_ptr[j + 1]):
            z = col_vals[p] * y[col_rows[p]]
            if z < 0.0:
                neg[j] += z
            elif z > 0.0:
                pos[j] += z
    return neg, pos


@dataclass(frozen=True)
class PrimalDualSolution:
    """Trained pair; residual_gap is the certified duality gap at (w, alpha)."""

    w: np.ndarray
    alpha: np.ndarray
    residual_gap: float
    converged: bool = True
    epochs: int = 0


@dataclass(frozen=True)
class CachedStats:
    """O(n + d) per-coordinate statistics of the trained pair on its data.

    row_scores[i] = z_i . w, row_norms[i] = |x_i.|_2,
    col_duals[j] = z_.j . alpha, col_norms[j] = |x_.j|_2, and
    col_neg_sums/col_pos_sums are the sums of negative/positive entries of
    z_.j (the extreme column-dual dots over the dual box, times n).
    """

    row_scores: np.ndarray
    row_norms: np.ndarray
    col_duals: np.ndarray
    col_norms: np.ndarray
    col_neg_sums: np.ndarray
    col_pos_sums: np.ndarray
    residual_gap: float


def primal_objective(dataset: SparseDataset, objective: Objective, w: np.ndarray) -> float:
    """n^-1 sum_i phi(z_i . w) + psi(w); penalty only when n = 0."""
    w = np.asarray(w, dtype=np.float64)
    if dataset.n == 0:
        return objective.penalty.eval(w)
    scores = _row_scores(dataset.row_ptr, dataset.row_cols, dataset.row_vals, dataset.y, w)
    return float(objective.loss.eval_array(scores).sum() / dataset.n + objective.penalty.eval(w))


def dual_objective(dataset: SparseDataset, objective: Objective, alpha: np.ndarray):
    """-n^-1 sum_i phi*(-alpha_i) - psi*(n^-1 Z^T alpha), or INFEASIBLE."""
    alpha = np.asarray(alpha, dtype=np.float64)
    lo, hi = objective.loss.dual_range
    if alpha.size and (alpha.min() < lo or alpha.max() > hi):
        return INFEASIBLE
    if dataset.n == 0:
        return 0.0
    v = _col_duals(dataset.col_ptr, dataset.col_rows, dataset.col_vals, dataset.y, alpha)
    v = v / dataset.n
    conj_sum = float(objective.loss.conj_array(-alpha).sum())
    return -conj_sum / dataset.n - objective.penalty.conj_eval(v)


def build_cached_stats(
    dataset: SparseDataset, solution: PrimalDualSolution
) -> CachedStats:
    neg, pos = _col_signed_sums(dataset.col_ptr, dataset.col_rows, dataset.col_vals, dataset.y)
    return CachedStats(
        row_scores=_row_scores(
            dataset.row_ptr, dataset.row_cols, dataset.row_vals, dataset.y, solution.w
        ),
        row_norms=_row_norms(dataset.row_ptr, dataset.row_vals),
        col_duals=_col_duals(
            dataset.col_ptr, dataset.col_rows, dataset.col_vals, dataset.y, solution.alpha
        ),
        col_norms=_col_norms(dataset.col_ptr, dataset.col_vals),
        col_neg_sums=neg,
        col_pos_sums=pos,
        residual_gap=solution.residual_gap,
    )


def train(
    dataset: SparseDataset,
    objective: Objective,
    tolerance: float = 1e-9,
    max_epochs: int = 1000,
    shuffle_seed: int | None = None,
    alpha0: np.ndarray | None = None,
    trace: list | None = None,
) -> tuple[PrimalDualSolution, CachedStats]:
    """Train to relative gap <= tolerance * max(1, |P|).

    Row order is cyclic (deterministic) unless shuffle_seed is given, in which
    case each epoch uses a fresh seeded permutation.  alpha0 warm-starts the
    dual; w is always rebuilt from alpha via the linkage, so a warm start on
    modified data is consistent.
    """
    n, d = dataset.n, dataset.d
    gamma = objective.loss.gamma
    lam = objective.penalty.lam
    if n == 0:
        sol = PrimalDualSolution(np.zeros(d), np.zeros(0), 0.0, True, 0)
        return sol, build_cached_stats(dataset, sol)
    if alpha0 is not None:
        alpha = np.array(alpha0, dtype=np.float64)
        lo, hi = objective.loss.dual_range
        if alpha.shape != (n,) or alpha.min() < lo or alpha.max() > hi:
            raise ValueError("alpha0 is not a feasible dual point")
    else:
        alpha = np.zeros(n)
    inv_nlam = 1.0 / (n * lam)
    w = _col_duals(dataset.col_ptr, dataset.col_rows, dataset.col_vals, dataset.y, alpha)
    w *= inv_nlam
    rng = np.random.default_rng(shuffle_seed) if shuffle_seed is not None else None
    gap = np.inf
    converged = False
    epochs = 0
    for epoch in range(max_epochs):
        order = (
            rng.permutation(n).astype(np.int64)
            if rng is not None
            else np.arange(n, dtype=np.int64)
        )
        _cd_epoch(
            dataset.row_ptr, dataset.row_cols, dataset.row_vals, dataset.y,
            alpha, w, gamma, inv_nlam, order,
        )
        epochs = epoch + 1
        p_val, d_val = _primal_dual(
            dataset.row_ptr, dataset.row_cols, dataset.row_vals, dataset.y,
            w, alpha, gamma, lam,
        )
        gap = p_val - d_val
        if trace is not None:
            trace.append((p_val, d_val, gap))
        if gap <= tolerance * max(1.0, abs(p_val)):
            converged = True
            break
    sol = PrimalDualSolution(w, alpha, float(gap), converged, epochs)
    return sol, build_cached_stats(dataset, sol)


STATS_VERSION = 1


def stats_to_json(solution: PrimalDualSolution, cached: CachedStats) -> str:
    return json.dumps(
        {
            "version": STATS_VERSION,
            "w": solution.w.tolist(),
            "alpha": solution.alpha.tolist(),
            "residual_gap": solution.residual_gap,
            "row_scores": cached.row_scores.tolist(),
            "row_norms": cached.row_norms.tolist(),
            "col_duals": cached.col_duals.tolist(),
            "col_norms": cached.col_norms.tolist(),
            "col_neg_sums": cached.col_neg_sums.tolist(),
            "col_pos_sums": cached.col_pos_sums.tolist(),
        }
    )


def stats_from_json(text: str) -> tuple[PrimalDualSolution, CachedStats]:
    obj = json.loads(text)
    if obj.get("version") != STATS_VERSION:
        raise ValueError(f"unsupported stats version {obj.get('version')}")
    gap = float(obj["residual_gap"])
    sol = PrimalDualSolution(
        w=np.asarray(obj["w"], dtype=np.float64),
        alpha=np.asarray(obj["alpha"], dtype=np.float64),
        residual_gap=gap,
    )
    cached = CachedStats(
        row_scores=np.asarray(obj["row_scores"], dtype=np.float64),
        row_norms=np.asarray(obj["row_norms"], dtype=np.float64),
        col_duals=np.asarray(obj["col_duals"], dtype=np.float64),
        col_norms=np.asarray(obj["col_norms"], dtype=np.float64),
        col_neg_sums=np.asarray(obj["col_neg_sums"], dtype=np.float64),
        col_pos_sums=np.asarray(obj["col_pos_sums"], dtype=np.float64),
        residual_gap=gap,
    )
    return sol, cached
