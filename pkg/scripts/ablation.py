"""Embedding ablation on a synthetic stream: last-layer vs fused features, with and without ensembling.

Prints final average accuracy and the variance ratio of fused features and
RHL embeddings for each variant (mean over seeds).
"""

import argparse
import json
import statistics
from pathlib import Path

from tsacl.runner import ExperimentConfig, run_experiment

VARIANTS = {
    "last layer": {"encoder": {"include_layers": [3]}},
    "fused": {"encoder": {}},
    "fused, 5 members": {"encoder": {}, "ensemble_size": 5},
}


def main():
    p = argparse.ArgumentParser()
    p.add_argument("config", nargs="?", default=str(Path(__file__).parent / "configs" / "hard.json"))
    p.add_argument("--seeds", type=int, nargs="+", default=[1, 2, 3])
    args = p.parse_args()
    base = json.loads(Path(args.config).read_text())

    print(f"{'variant':<18} {'A_T':>7} {'VR feat':>8} {'VR emb':>8}")
    for name, override in VARIANTS.items():
        cfg = ExperimentConfig.from_dict({**base, "ensemble_size": 1, **override, "seeds": args.seeds})
        runs = run_experiment(cfg)["runs"]
        acc = statistics.fmean(r["final_accuracy"] for r in runs)
        vr_f = statistics.fmean(r["vr_features"] for r in runs)
        vr_e = statistics.fmean(r["vr_embedding"] for r in runs)
        print(f"{name:<18} {acc:7.4f} {vr_f:8.3f} {vr_e:8.3f}")


if __name__ == "__main__":
    main()
