"""Run an experiment config and write report.json / summary.csv.

    python scripts/run_benchmark.py scripts/configs/desk.json --out results/desk
"""

import argparse
import logging

from tsacl.runner import ExperimentConfig, emit_report, run_experiment


def main():
    p = argparse.ArgumentParser()
    p.add_argument("config")
    p.add_argument("--out", default="results/benchmark")
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    report = run_experiment(ExperimentConfig.from_file(args.config), args.out)
    emit_report(report, args.out)
    agg = report["aggregate"]
    print(f"A_T {agg['final_accuracy']['mean']:.4f} +- {agg['final_accuracy']['std']:.4f}")
    if agg["forgetting"]["mean"] is not None:
        print(f"F_T {agg['forgetting']['mean']:.4f} +- {agg['forgetting']['std']:.4f}")
    for run in report["runs"]:
        gap = run["joint_oracle"]["max_abs_gap"]
        print(f"  seed {run['seed']}: gamma={run['gamma']:g} A_T={run['final_accuracy']:.4f} oracle gap={gap:.1e}")


if __name__ == "__main__":
    main()
