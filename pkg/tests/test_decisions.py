import numpy as np
import pytest

from deltabound import (
    BoundsReport,
    ModificationSet,
    OverlayView,
    RetrainPolicy,
    Verdict,
    build_cached_stats,
    classify,
    classify_rows,
    evaluate_bounds,
    make_objective,
    param_change_upper,
    score_bounds,
    screen_samples,
    should_retrain,
    verdicts_from_jsonl,
    verdicts_to_jsonl,
)
from deltabound.solver import PrimalDualSolution

from conftest import random_dataset, screening_fixture


def report_of(w_lo, w_hi, a_lo=(0.0,), a_hi=(1.0,)):
    return BoundsReport(
        gap=0.1, case="combined", dual_radius=1.0, primal_radius=1.0,
        w_lower=np.array(w_lo, dtype=float), w_upper=np.array(w_hi, dtype=float),
        alpha_lower=np.array(a_lo, dtype=float), alpha_upper=np.array(a_hi, dtype=float),
    )


class TestScoreBounds:
    def test_frozen(self):
        # x = (1, -1) against w in [-1,1] x [0,2]: lo = -1 - 2, hi = 1 - 0
        rep = report_of([-1.0, 0.0], [1.0, 2.0])
        lo, hi = score_bounds(np.array([0, 1]), np.array([1.0, -1.0]), rep)
        assert (lo, hi) == (-3.0, 1.0)

    def test_sign_split_tight(self):
        rng = np.random.default_rng(0)
        center = rng.normal(size=6)
        half = rng.random(6)
        rep = report_of(center - half, center + half)
        cols = np.array([0, 2, 5])
        vals = np.array([0.7, -1.2, 0.4])
        lo, hi = score_bounds(cols, vals, rep)
        # brute force over box corners on the used coordinates
        best_lo, best_hi = np.inf, -np.inf
        for bits in range(8):
            w = np.where(
                [(bits >> k) & 1 for k in range(3)],
                rep.w_upper[cols], rep.w_lower[cols],
            )
            s = float(vals @ w)
            best_lo, best_hi = min(best_lo, s), max(best_hi, s)
        assert lo == pytest.approx(best_lo, abs=1e-12)
        assert hi == pytest.approx(best_hi, abs=1e-12)


class TestClassify:
    def test_three_outcomes(self):
        pos = classify(np.array([0]), np.array([1.0]), report_of([0.5], [1.0]))
        assert pos.label == 1 and pos.lower == 0.5
        neg = classify(np.array([0]), np.array([1.0]), report_of([-1.0], [-0.5]))
        assert neg.label == -1
        unk = classify(np.array([0]), np.array([1.0]), report_of([-0.5], [0.5]))
        assert unk.label is None

    def test_zero_lower_is_positive(self):
        v = classify(np.array([0]), np.array([1.0]), report_of([0.0], [1.0]))
        assert v.label == 1

    def test_rows_match_single(self):
        ds = random_dataset(25, 6, density=0.4, seed=1)
        rng = np.random.default_rng(2)
        center = rng.normal(size=6)
        rep = report_of(center - 0.2, center + 0.2, np.zeros(25), np.ones(25))
        verdicts = classify_rows(ds.row_ptr, ds.row_cols, ds.row_vals, rep)
        for i, v in enumerate(verdicts):
            cols, vals = ds.row(i)
            single = classify(cols, vals, rep)
            # summation order differs between the two paths by an ulp
            assert v.lower == pytest.approx(single.lower, abs=1e-12)
            assert v.upper == pytest.approx(single.upper, abs=1e-12)
            if min(abs(single.lower), abs(single.upper)) > 1e-9:
                assert v.label == single.label

    def test_empty_row_scores_zero(self):
        rep = report_of([-1.0], [1.0])
        verdicts = classify_rows(
            np.array([0, 0]), np.array([], dtype=int), np.array([]), rep
        )
        assert verdicts[0] == Verdict(1, 0.0, 0.0)  # [0, 0] certifies sign >= 0


class TestDrift:
    def test_frozen(self):
        rep = report_of([-2.0, -3.0], [1.0, 2.0])
        w = np.zeros(2)
        # per-coordinate worst drift: max(2,1)=2 and max(3,2)=3
        assert param_change_upper(rep, w) == pytest.approx(np.sqrt(13.0))

    def test_reference_outside_box(self):
        rep = report_of([0.0], [1.0])
        assert param_change_upper(rep, np.array([3.0])) == pytest.approx(3.0)

    def test_policy(self):
        rep = report_of([-2.0, -3.0], [1.0, 2.0])
        w = np.zeros(2)
        assert should_retrain(RetrainPolicy(3.0), rep, w)
        assert not should_retrain(RetrainPolicy(4.0), rep, w)
        with pytest.raises(ValueError):
            RetrainPolicy(0.0)


class TestScreening:
    def test_fixture_screens_the_far_sample(self):
        ds, obj, w, alpha = screening_fixture()
        sol = PrimalDualSolution(w=w, alpha=alpha, residual_gap=0.0)
        cached = build_cached_stats(ds, sol)
        idx = screen_samples(None, cached, 0.0, obj)
        assert idx.tolist() == [2]

    def test_shrinks_as_gap_grows(self):
        ds, obj, w, alpha = screening_fixture()
        sol = PrimalDualSolution(w=w, alpha=alpha, residual_gap=0.0)
        cached = build_cached_stats(ds, sol)
        tight = set(screen_samples(None, cached, 0.0, obj).tolist())
        loose = set(screen_samples(None, cached, 0.05, obj).tolist())
        assert loose <= tight

    def test_uses_delta_overrides(self, small_trained):
        ds, obj, sol, cached = small_trained
        mods = ModificationSet.from_triples([(0, 0, 0.9)])
        view = OverlayView(ds, mods)
        delta, gap, ctx = evaluate_bounds(cached, sol, obj, view, mods)
        base_scores = cached.row_scores.copy()
        idx = screen_samples(delta, cached, gap, obj)
        assert np.array_equal(cached.row_scores, base_scores)  # no mutation
        assert np.all(np.diff(idx) > 0)


class TestVerdictIO:
    def test_round_trip(self):
        verdicts = [Verdict(1, 0.2, 0.9), Verdict(None, -0.1, 0.3), Verdict(-1, -2.0, -0.5)]
        text = verdicts_to_jsonl(verdicts)
        lines = text.strip().split("\n")
        assert len(lines) == 3
        assert '"unknown"' in lines[1]
        assert verdicts_from_jsonl(text) == verdicts

    def test_empty(self):
        assert verdicts_to_jsonl([]) == ""
        assert verdicts_from_jsonl("") == []
