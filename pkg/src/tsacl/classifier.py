"""Closed-form ridge classifier with exact recursive class-incremental updates.

The classifier keeps two matrices:

* ``weights``  ``[d_e, D_t]``: the ridge solution over every sample seen so far,
  one column per registered class.
* ``psi``      ``[d_e, d_e]``: the inverse of the regularized Gram matrix
  ``(sum_i U_i^T U_i + gamma I)^-1``.

A new task only needs these two matrices and its own embeddings; the result is
identical (up to float rounding) to refitting on all data at once, which is
what :func:`joint_fit_oracle` does directly.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg

DEFAULT_CHUNK = 256


class ClassCollisionError(ValueError):
    pass


class SingularSystemError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class LabelBlock:
    """One-hot targets for a task, columns ordered as ``classes``."""

    onehot: np.ndarray  # [N, len(classes)]
    classes: tuple[int, ...]

    def __post_init__(self):
        if self.onehot.ndim != 2 or self.onehot.shape[1] != len(self.classes):
            raise ValueError("one-hot matrix must have one column per class")
        if len(set(self.classes)) != len(self.classes):
            raise ValueError("duplicate class ids in label block")
        if not (np.isin(self.onehot, (0, 1)).all() and (self.onehot.sum(axis=1) == 1).all()):
            raise ValueError("every label row must contain exactly one 1")

    @classmethod
    def from_labels(cls, labels, classes=None) -> "LabelBlock":
        labels = np.asarray(labels)
        if classes is None:
            classes = sorted(set(labels.tolist()))
        classes = tuple(int(c) for c in classes)
        col = {c: j for j, c in enumerate(classes)}
        try:
            idx = np.array([col[int(y)] for y in labels], dtype=np.int64)
        except KeyError as e:
            raise ValueError(f"label {e.args[0]} not among the block's classes {classes}") from None
        onehot = np.zeros((labels.shape[0], len(classes)))
        onehot[np.arange(labels.shape[0]), idx] = 1.0
        return cls(onehot, classes)


@dataclass(frozen=True, eq=False)
class AnalyticClassifier:
    weights: np.ndarray = field(repr=False)
    psi: np.ndarray = field(repr=False)
    gamma: float
    registry: tuple[int, ...]
    tasks_seen: int = 1

    @property
    def d_e(self) -> int:
        return self.psi.shape[0]

    @property
    def num_outputs(self) -> int:
        return self.weights.shape[1]

    def update(self, embeddings, labels: LabelBlock, chunk_size: int = DEFAULT_CHUNK) -> "AnalyticClassifier":
        return update(self, embeddings, labels, chunk_size)

    def scores(self, embeddings) -> np.ndarray:
        return predict_scores(self, embeddings)

    def predict(self, embeddings) -> np.ndarray:
        return predict_labels(self, embeddings)


def _symmetrize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.T)


def _as_embeddings(u, d_e: int | None = None) -> np.ndarray:
    u = np.asarray(u, dtype=np.float64)
    if u.ndim != 2:
        raise ValueError(f"embeddings must be [N, d_e], got shape {u.shape}")
    if d_e is not None and u.shape[1] != d_e:
        raise ValueError(f"embedding width {u.shape[1]} does not match classifier width {d_e}")
    if not np.isfinite(u).all():
        raise ValueError("embeddings contain non-finite values")
    return u


def _spd_inverse(m: np.ndarray, check_cond: bool = False) -> np.ndarray:
    if check_cond and np.linalg.cond(m) > 1 / np.finfo(float).eps:
        raise SingularSystemError("regularized Gram matrix is numerically singular")
    try:
        factor = linalg.cho_factor(m, lower=True, check_finite=False)
    except np.linalg.LinAlgError:
        raise SingularSystemError("regularized Gram matrix is not positive definite") from None
    inv = linalg.cho_solve(factor, np.eye(m.shape[0]), check_finite=False)
    if not np.isfinite(inv).all():
        raise SingularSystemError("regularized Gram matrix is numerically singular")
    return inv


def fit_initial(embeddings, labels: LabelBlock, gamma: float) -> AnalyticClassifier:
    """Ridge fit on the first task: ``psi = (U^T U + gamma I)^-1``, ``W = psi U^T V``."""
    u = _as_embeddings(embeddings)
    if u.shape[0] < 1:
        raise ValueError("need at least one sample")
    if labels.onehot.shape[0] != u.shape[0]:
        raise ValueError("label rows do not match embedding rows")
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    gram = u.T @ u + gamma * np.eye(u.shape[1])
    psi = _symmetrize(_spd_inverse(gram, check_cond=gamma == 0))
    weights = psi @ (u.T @ labels.onehot)
    return AnalyticClassifier(weights, psi, float(gamma), labels.classes, 1)


def update_psi(psi: np.ndarray, embeddings: np.ndarray, chunk_size: int = DEFAULT_CHUNK) -> np.ndarray:
    """Fold rows of ``embeddings`` into ``psi`` via the Woodbury identity.

    Each chunk solves an SPD system of size at most ``chunk_size``.
    """
    if chunk_size < 1:
        raise ValueError("chunk_size must be positive")
    psi = psi.copy()
    for s in range(0, embeddings.shape[0], chunk_size):
        u = embeddings[s : s + chunk_size]
        pu = psi @ u.T  # [d_e, c]
        inner = _symmetrize(np.eye(u.shape[0]) + u @ pu)
        factor = linalg.cho_factor(inner, lower=True, check_finite=False)
        psi -= pu @ linalg.cho_solve(factor, pu.T, check_finite=False)
        psi = _symmetrize(psi)
    return psi


def update(
    classifier: AnalyticClassifier,
    embeddings,
    labels: LabelBlock,
    chunk_size: int = DEFAULT_CHUNK,
) -> AnalyticClassifier:
    """Absorb one new task with disjoint classes; returns a new classifier.

    Only the current task's data is read. Old columns are corrected by
    ``-psi_t U^T U W_{t-1}`` and the new columns are ``psi_t U^T V``.
    """
    u = _as_embeddings(embeddings, classifier.d_e)
    if u.shape[0] == 0:
        raise ValueError("task has no samples")
    if labels.onehot.shape[0] != u.shape[0]:
        raise ValueError("label rows do not match embedding rows")
    clash = set(labels.classes) & set(classifier.registry)
    if clash:
        raise ClassCollisionError(f"classes already registered: {sorted(clash)}")

    psi = update_psi(classifier.psi, u, chunk_size)
    gram = u.T @ u
    cross = u.T @ labels.onehot
    old = classifier.weights - psi @ (gram @ classifier.weights)
    new = psi @ cross
    return replace(
        classifier,
        weights=np.hstack([old, new]),
        psi=psi,
        registry=classifier.registry + labels.classes,
        tasks_seen=classifier.tasks_seen + 1,
    )


def block_diagonal_labels(blocks) -> np.ndarray:
    """Stack per-task one-hot blocks into the joint ``[N_total, D_t]`` target."""
    widths = [b.onehot.shape[1] for b in blocks]
    rows = [b.onehot.shape[0] for b in blocks]
    out = np.zeros((sum(rows), sum(widths)))
    r = c = 0
    for b, n, w in zip(blocks, rows, widths):
        out[r : r + n, c : c + w] = b.onehot
        r += n
        c += w
    return out


def joint_fit_oracle(embeddings, labels, gamma: float) -> np.ndarray:
    """One-shot ridge solve over all data; the reference for the recursion."""
    u = _as_embeddings(embeddings)
    v = np.asarray(labels, dtype=np.float64)
    a = u.T @ u + gamma * np.eye(u.shape[1])
    if gamma == 0 and np.linalg.cond(a) > 1 / np.finfo(float).eps:
        raise SingularSystemError("Gram matrix is singular at gamma = 0")
    try:
        return np.linalg.solve(a, u.T @ v)
    except np.linalg.LinAlgError:
        raise SingularSystemError("Gram matrix is singular") from None


def predict_scores(classifier: AnalyticClassifier, embeddings) -> np.ndarray:
    u = _as_embeddings(embeddings, classifier.d_e)
    return u @ classifier.weights


def argmax_labels(scores: np.ndarray, registry) -> np.ndarray:
    # np.argmax returns the first maximum: ties go to the lowest registry position
    return np.asarray(registry, dtype=np.int64)[np.argmax(scores, axis=1)]


def predict_labels(classifier: AnalyticClassifier, embeddings) -> np.ndarray:
    return argmax_labels(predict_scores(classifier, embeddings), classifier.registry)


def woodbury_check(a, u, c, v) -> float:
    """Relative Frobenius gap between ``(A + U C V)^-1`` and its Woodbury expansion."""
    a, u, c, v = (np.asarray(m, dtype=np.float64) for m in (a, u, c, v))
    for name, m in (("A", a), ("C", c)):
        if np.linalg.cond(m) > 1 / np.finfo(float).eps:
            raise SingularSystemError(f"{name} is singular")
    a_inv = np.linalg.inv(a)
    c_inv = np.linalg.inv(c)
    direct = np.linalg.inv(a + u @ c @ v)
    expanded = a_inv - a_inv @ u @ np.linalg.inv(c_inv + v @ a_inv @ u) @ v @ a_inv
    return float(np.linalg.norm(direct - expanded) / np.linalg.norm(direct))
