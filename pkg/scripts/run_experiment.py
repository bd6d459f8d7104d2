#!/usr/bin/env python
"""Run the synthetic edit grid and write trials.csv / aggregates.json.

Small by default; pass --full for the large grid (takes minutes).
"""
import argparse
import sys

from deltabound.experiment import ExperimentConfig, emit_tables, run_experiment


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="results")
    ap.add_argument("--full", action="store_true")
    ap.add_argument("--oracle-check", action="store_true")
    ap.add_argument("--no-timing", action="store_true")
    args = ap.parse_args()
    if args.full:
        config = ExperimentConfig(
            n=20000, d=1000, density=0.01,
            magnitudes=(1, 10, 100, 1000),
            seeds=(0, 1, 2, 3, 4),
            measure_time=not args.no_timing,
            oracle_check=args.oracle_check,
        )
    else:
        config = ExperimentConfig(
            n=1000, d=100, density=0.05,
            seeds=(0, 1),
            measure_time=not args.no_timing,
            oracle_check=args.oracle_check,
        )
    results = run_experiment(config)
    trials, agg = emit_tables(results, args.out)
    print(f"wrote {trials} and {agg} ({len(results)} trials)")
    bad = sum(r.bound_violations + r.label_contradictions for r in results)
    if config.oracle_check:
        print(f"oracle violations/contradictions: {bad}")
    return 0 if bad == 0 else 1


if __name__ == "__main__":
    sys.exit(main())
