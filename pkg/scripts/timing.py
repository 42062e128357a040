"""Per-task update time as the number of learned classes grows.

With a fixed task size the update cost should stay flat: it depends on the
task's samples and the embedding width, not on how much data came before.
"""

import argparse
import time

import numpy as np

from tsacl.classifier import LabelBlock, fit_initial, update


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--d-e", type=int, default=1024)
    p.add_argument("--n-per-task", type=int, default=1000)
    p.add_argument("--tasks", type=int, default=20)
    p.add_argument("--chunk", type=int, default=256)
    args = p.parse_args()

    rng = np.random.default_rng(0)
    clf = None
    for t in range(args.tasks):
        u = np.maximum(rng.standard_normal((args.n_per_task, args.d_e)), 0)
        classes = (2 * t, 2 * t + 1)
        block = LabelBlock.from_labels(rng.choice(classes, args.n_per_task), classes)
        start = time.perf_counter()
        clf = fit_initial(u, block, 10.0) if clf is None else update(clf, u, block, args.chunk)
        print(f"task {t + 1:3d}: {1e3 * (time.perf_counter() - start):8.1f} ms  ({clf.num_outputs} classes)")


if __name__ == "__main__":
    main()
