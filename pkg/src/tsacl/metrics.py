"""Continual-learning metrics.

Accuracy-matrix arithmetic is done on exact rationals: an entry is either a
``Fraction`` (correct / total, as the runner records it) or a float read as
the decimal it prints as. Averages of accuracies therefore come out the way
they do by hand, e.g. ``mean(0.5, 0.7, 0.9) == 0.7``.
"""

from __future__ import annotations

import math
from fractions import Fraction
from numbers import Rational

import numpy as np


def _exact(x) -> Fraction:
    if isinstance(x, Rational):
        return Fraction(x)
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"non-finite accuracy {x}")
    return Fraction(repr(x))


class AccuracyMatrix:
    """Lower-triangular record: ``self[t, i]`` is accuracy on task i after learning task t (1-based)."""

    def __init__(self, rows=()):
        self._rows: list[list[Fraction]] = []
        for row in rows:
            self.add_row(row)

    def add_row(self, row) -> None:
        row = [_exact(a) for a in row]
        if len(row) != len(self._rows) + 1:
            raise ValueError(f"row {len(self._rows) + 1} must have {len(self._rows) + 1} entries, got {len(row)}")
        if any(a < 0 or a > 1 for a in row):
            raise ValueError("accuracies must lie in [0, 1]")
        self._rows.append(row)

    @property
    def num_tasks(self) -> int:
        return len(self._rows)

    def __len__(self):
        return len(self._rows)

    def __getitem__(self, key) -> float:
        t, i = key
        return float(self.exact(t, i))

    def exact(self, t: int, i: int) -> Fraction:
        if not 1 <= i <= t <= len(self._rows):
            raise IndexError(f"no entry A[{t},{i}] in a {len(self._rows)}-task matrix")
        return self._rows[t - 1][i - 1]

    def row(self, t: int) -> list[float]:
        return [float(a) for a in self._rows[t - 1]]

    def to_list(self) -> list[list[float]]:
        return [self.row(t) for t in range(1, len(self._rows) + 1)]


def task_accuracy(predictions, truth) -> float:
    return float(task_accuracy_exact(predictions, truth))


def task_accuracy_exact(predictions, truth) -> Fraction:
    predictions, truth = np.asarray(predictions), np.asarray(truth)
    if predictions.shape != truth.shape:
        raise ValueError("predictions and truth differ in length")
    if predictions.size == 0:
        raise ValueError("cannot score an empty task")
    return Fraction(int((predictions == truth).sum()), int(truth.size))


def _check_t(matrix: AccuracyMatrix, t: int) -> None:
    if not 1 <= t <= matrix.num_tasks:
        raise ValueError(f"row {t} is not populated (matrix has {matrix.num_tasks} rows)")


def average_accuracy(matrix: AccuracyMatrix, t: int | None = None) -> float:
    """Mean of row ``t`` (defaults to the last row)."""
    t = matrix.num_tasks if t is None else t
    _check_t(matrix, t)
    return float(sum(matrix.exact(t, i) for i in range(1, t + 1)) / t)


def forgetting(matrix: AccuracyMatrix, t: int | None = None) -> float:
    """Mean drop from the best earlier accuracy on each past task to the accuracy after task ``t``.

    The best is taken over rows ``i..t-1``; earlier rows have no entry for task i.
    Negative values mean accuracy on old tasks went up.
    """
    t = matrix.num_tasks if t is None else t
    if t < 2:
        raise ValueError("forgetting needs at least two tasks")
    _check_t(matrix, t)
    total = Fraction(0)
    for i in range(1, t):
        best = max(matrix.exact(j, i) for j in range(i, t))
        total += best - matrix.exact(t, i)
    return float(total / (t - 1))


def variance_ratio(features, labels, classes=None) -> float:
    """trace(S_between) / trace(S_within), class-size weighted.

    Returns ``math.inf`` when the classes are distinct point masses. Passing
    ``classes`` makes a class without samples an error instead of being skipped.
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] != y.shape[0]:
        raise ValueError("features and labels differ in length")
    present = np.unique(y)
    if classes is not None:
        empty = sorted(set(classes) - set(present.tolist()))
        if empty:
            raise ValueError(f"classes without samples: {empty}")
    classes = present
    if classes.size < 2:
        raise ValueError("variance ratio needs at least two classes")
    n = x.shape[0]
    mu = x.mean(axis=0)
    between = within = 0.0
    for c in classes:
        xc = x[y == c]
        # centre on a member first so a point-mass class has exactly zero spread
        d = xc - xc[0]
        dm = d.mean(axis=0)
        w = xc.shape[0] / n
        between += w * float(((xc[0] + dm - mu) ** 2).sum())
        within += w * float(((d - dm) ** 2).sum(axis=1).mean())
    if within == 0:
        if between == 0:
            raise ValueError("all samples identical: variance ratio undefined")
        return math.inf
    return between / within
