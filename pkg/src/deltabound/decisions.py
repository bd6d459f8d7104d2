"""Decisions certified by the coordinate bounds, without retraining.

Three consumers of a bounds report: sign-certified label prediction for
query points, a retrain trigger driven by a certified parameter-drift
bound, and screening of training samples whose dual variable is provably
zero at the edited optimum.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .delta_bounds import BoundsReport, DeltaStats, primal_ball_radius
from .objectives import Objective
from .solver import CachedStats


@dataclass(frozen=True)
class RetrainPolicy:
    """Retrain once the certified parameter drift reaches ``theta``."""

    theta: float

    def __post_init__(self):
        if not self.theta > 0.0:
            raise ValueError("theta must be positive")


@dataclass(frozen=True)
class Verdict:
    """Certified score interval for one query; label None means undetermined."""

    label: int | None
    lower: float
    upper: float


def score_bounds(cols: np.ndarray, vals: np.ndarray, report: BoundsReport) -> tuple[float, float]:
    """Range of the decision score x . w over the certified coordinate box."""
    cols = np.asarray(cols, dtype=np.int64)
    vals = np.asarray(vals, dtype=np.float64)
    lo_coef = np.where(vals > 0.0, report.w_lower[cols], report.w_upper[cols])
    hi_coef = np.where(vals > 0.0, report.w_upper[cols], report.w_lower[cols])
    return float(np.dot(vals, lo_coef)), float(np.dot(vals, hi_coef))


def classify(cols: np.ndarray, vals: np.ndarray, report: BoundsReport) -> Verdict:
    lo, hi = score_bounds(cols, vals, report)
    if hi < 0.0:
        return Verdict(-1, lo, hi)
    if lo >= 0.0:
        return Verdict(1, lo, hi)
    return Verdict(None, lo, hi)


def classify_rows(
    row_ptr: np.ndarray, row_cols: np.ndarray, row_vals: np.ndarray, report: BoundsReport
) -> list[Verdict]:
    """Vectorized classify over CSR query rows."""
    vals = np.asarray(row_vals, dtype=np.float64)
    cols = np.asarray(row_cols, dtype=np.int64)
    lo_c = vals * np.where(vals > 0.0, report.w_lower[cols], report.w_upper[cols])
    hi_c = vals * np.where(vals > 0.0, report.w_upper[cols], report.w_lower[cols])
    # cumsum differencing: safe for empty rows, unlike reduceat
    lo_cs = np.concatenate(([0.0], np.cumsum(lo_c)))
    hi_cs = np.concatenate(([0.0], np.cumsum(hi_c)))
    ptr = np.asarray(row_ptr, dtype=np.int64)
    lows = lo_cs[ptr[1:]] - lo_cs[ptr[:-1]]
    highs = hi_cs[ptr[1:]] - hi_cs[ptr[:-1]]
    out = []
    for lo, hi in zip(lows, highs):
        if hi < 0.0:
            out.append(Verdict(-1, float(lo), float(hi)))
        elif lo >= 0.0:
            out.append(Verdict(1, float(lo), float(hi)))
        else:
            out.append(Verdict(None, float(lo), float(hi)))
    return out


def param_change_upper(report: BoundsReport, w: np.ndarray) -> float:
    """Certified upper bound on |w_new - w| from the coordinate box."""
    spread = np.maximum(w - report.w_lower, report.w_upper - w)
    spread = np.maximum(spread, 0.0)
    return float(np.sqrt(np.dot(spread, spread)))


def should_retrain(policy: RetrainPolicy, report: BoundsReport, w: np.ndarray) -> bool:
    return param_change_upper(report, w) >= policy.theta


def screen_samples(
    delta: DeltaStats | None,
    cached: CachedStats,
    gap: float,
    objective: Objective,
) -> np.ndarray:
    """Indices whose dual variable is provably zero at the edited optimum.

    A sample whose score stays beyond the smoothed margin for every primal
    vector in the certified ball has loss gradient zero there, hence dual
    variable zero; its row can be dropped from any retrain without changing
    the result.
    """
    scores = cached.row_scores.astype(np.float64, copy=True)
    norms = cached.row_norms.astype(np.float64, copy=True)
    if delta is not None:
        for i, s in delta.new_row_scores.items():
            scores[i] = s
        for i, r in delta.new_row_norms.items():
            norms[i] = r
    radius = primal_ball_radius(gap, objective.penalty.lam)
    return np.nonzero(scores - norms * radius > 1.0)[0].astype(np.int64)


def verdicts_to_jsonl(verdicts: list[Verdict]) -> str:
    lines = []
    for v in verdicts:
        label = "unknown" if v.label is None else v.label
        lines.append(json.dumps({"label": label, "lower": v.lower, "upper": v.upper}))
    return "\n".join(lines) + ("\n" if lines else "")


def verdicts_from_jsonl(text: str) -> list[Verdict]:
    out = []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        obj = json.loads(line)
        label = obj["label"]
        out.append(
            Verdict(
                label=None if label == "unknown" else int(label),
                lower=float(obj["lower"]),
                upper=float(obj["upper"]),
            )
        )
    return out
