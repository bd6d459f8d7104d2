"""Certified coordinate bounds for edited linear classifiers.

Train a smoothed-hinge ridge classifier once, cache O(n + d) statistics,
then bound every coordinate of the re-optimized primal and dual solutions
after a batch of data-cell edits in time proportional to the edit set.
The bounds certify label predictions, trigger retrains, and screen
provably inactive samples; a partial re-optimization pass tightens them.
"""
from .decisions import (
    RetrainPolicy,
    Verdict,
    classify,
    classify_rows,
    param_change_upper,
    score_bounds,
    screen_samples,
    should_retrain,
    verdicts_from_jsonl,
    verdicts_to_jsonl,
)
from .delta_bounds import (
    BoundConsistencyError,
    BoundContext,
    BoundsReport,
    DeltaStats,
    ball_linear_range,
    combine_bounds,
    compute_gap,
    dual_ball_radius,
    dual_sphere_bounds,
    evaluate_bounds,
    make_context,
    primal_ball_radius,
    primal_sphere_bounds,
    update_delta_stats,
)
from .experiment import (
    ExperimentConfig,
    TrialResult,
    emit_tables,
    feature_value_ranges,
    generate_modifications,
    run_experiment,
    run_trial,
    synthetic_dataset,
)
from .objectives import (
    INFEASIBLE,
    L2Penalty,
    Objective,
    SmoothedHingeLoss,
    dual_domain_column_range,
    make_objective,
)
from .partial_opt import (
    CheckSolution,
    PartialPlan,
    optimize_plan,
    partial_dual_optimize,
    partial_primal_optimize,
    plan_targets,
    tightened_bounds,
    tightened_context,
    tightened_gap,
)
from .solver import (
    CachedStats,
    PrimalDualSolution,
    build_cached_stats,
    dual_objective,
    primal_objective,
    stats_from_json,
    stats_to_json,
    train,
)
from .sparse_data import (
    LibsvmFormatError,
    ModificationSet,
    OverlayView,
    SparseDataset,
    apply_modifications,
    emit_libsvm,
    normalize_rows,
    parse_libsvm,
    split_train_test,
)

__version__ = "0.1.0"
