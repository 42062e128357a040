"""Experiment orchestration: config, task-stream execution, ensembles and reports."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import math
import statistics
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .classifier import (
    DEFAULT_CHUNK,
    AnalyticClassifier,
    LabelBlock,
    argmax_labels,
    block_diagonal_labels,
    fit_initial,
    joint_fit_oracle,
    predict_labels,
    predict_scores,
    update,
)
from .data import SyntheticSpec, TaskStream, build_task_stream, generate_synthetic, load_dataset, load_labels
from .encoder import NORMALIZATIONS, EncoderSpec, build_random_encoder, encode, load_precomputed_features
from .expansion import RhlProjection, expand, init_rhl
from .metrics import AccuracyMatrix, average_accuracy, forgetting, task_accuracy_exact, variance_ratio

log = logging.getLogger(__name__)

REPORT_VERSION = 1


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    dataset: dict = field(default_factory=lambda: {"synthetic": {}})
    classes_per_task: int = 2
    # leading tasks used only for choosing gamma; 0 = hold out part of each training task instead
    validation_tasks: int = 0
    validation_fraction: float = 0.1
    gamma_grid: list = field(default_factory=lambda: [1.0, 10.0, 100.0])
    expansion_dim: int = 512
    expansion_scale: float | None = None
    standardize_features: bool = False
    encoder: dict | None = field(default_factory=dict)
    precomputed: bool = False
    normalization: str = "none"
    ensemble_size: int = 1
    seeds: list = field(default_factory=lambda: [1, 2, 3, 4, 5])
    chunk_size: int = DEFAULT_CHUNK
    output_dir: str | None = None

    def __post_init__(self):
        if not isinstance(self.dataset, dict) or len(self.dataset) != 1 or not (
            {"path", "synthetic"} & set(self.dataset)
        ):
            raise ConfigError('dataset must be {"path": ...} or {"synthetic": {...}}')
        if "synthetic" in self.dataset:
            try:
                SyntheticSpec(**self.dataset["synthetic"])
            except TypeError as e:
                raise ConfigError(f"dataset.synthetic: {e}") from None
            if self.precomputed:
                raise ConfigError("precomputed features need a dataset path")
        if not self.gamma_grid or any(not g > 0 for g in self.gamma_grid):
            raise ConfigError("gamma_grid must be non-empty with positive entries")
        if self.ensemble_size < 1:
            raise ConfigError("ensemble_size must be >= 1")
        if not self.seeds:
            raise ConfigError("at least one run seed is required")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("run seeds must be distinct")
        if self.classes_per_task < 1 or self.expansion_dim < 1 or self.chunk_size < 1:
            raise ConfigError("classes_per_task, expansion_dim and chunk_size must be positive")
        if self.validation_tasks < 0:
            raise ConfigError("validation_tasks must be >= 0")
        if not 0 < self.validation_fraction < 1:
            raise ConfigError("validation_fraction must be in (0, 1)")
        if self.normalization not in NORMALIZATIONS:
            raise ConfigError(f"normalization must be one of {NORMALIZATIONS}")
        if not self.precomputed and self.encoder is None:
            raise ConfigError("an encoder spec is required unless precomputed is set")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        return cls(**d)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


# -- ensemble -------------------------------------------------------------------


def softmax(scores) -> np.ndarray:
    """Row-wise softmax over the last axis."""
    s = np.asarray(scores, dtype=np.float64)
    if not np.isfinite(s).all():
        raise ValueError("softmax input contains non-finite values")
    e = np.exp(s - s.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


@dataclass(frozen=True)
class Member:
    rhl: RhlProjection
    classifier: AnalyticClassifier


def ensemble_predict(members, features, standardize: bool = False) -> np.ndarray:
    """Average the members' softmax outputs and take the argmax class."""
    members = list(members)
    if not members:
        raise ValueError("ensemble needs at least one member")
    registry = members[0].classifier.registry
    for m in members[1:]:
        if m.classifier.registry != registry:
            raise ValueError("ensemble members disagree on the class registry")
    probs = np.stack(
        [softmax(predict_scores(m.classifier, expand(features, m.rhl, standardize))) for m in members]
    )
    # sort over members so the summation order, and hence the result, ignores member order
    mean = np.sort(probs, axis=0).sum(axis=0) / len(members)
    return argmax_labels(mean, registry)


# -- pipeline -------------------------------------------------------------------


@dataclass
class _Data:
    train_features: np.ndarray  # U_stack
    train_labels: np.ndarray
    test_features: np.ndarray
    test_labels: np.ndarray
    num_classes: int
    encoder_meta: dict


def _prepare_data(config: ExperimentConfig) -> _Data:
    if "synthetic" in config.dataset:
        train, test = generate_synthetic(SyntheticSpec(**config.dataset["synthetic"]))
    elif config.precomputed:
        root = config.dataset["path"]
        ftr, fte = load_precomputed_features(root, "train"), load_precomputed_features(root, "test")
        ytr, num_classes = load_labels(root, "train")
        yte, _ = load_labels(root, "test")
        return _Data(
            ftr.matrix.astype(np.float64), ytr, fte.matrix.astype(np.float64), yte, num_classes, {"precomputed": True}
        )
    else:
        train, test = load_dataset(config.dataset["path"], "train"), load_dataset(config.dataset["path"], "test")
    spec_dict = {"in_channels": train.channels, **config.encoder}
    spec = EncoderSpec.from_dict(spec_dict)
    encoder = build_random_encoder(spec)
    t0 = time.perf_counter()
    ftr = encode(encoder, train, config.normalization)
    fte = encode(encoder, test, config.normalization)
    log.info("encoded %d + %d samples in %.2fs", train.n, test.n, time.perf_counter() - t0)
    return _Data(
        ftr.matrix.astype(np.float64),
        train.labels,
        fte.matrix.astype(np.float64),
        test.labels,
        train.num_classes,
        {"encoder": spec.to_dict(), "normalization": config.normalization},
    )


@dataclass(frozen=True)
class _Labels:
    """Just enough of a dataset for :func:`build_task_stream`."""

    labels: np.ndarray
    num_classes: int


def _stream(data: _Data, classes_per_task: int, seed: int) -> TaskStream:
    pair = (_Labels(data.train_labels, data.num_classes), _Labels(data.test_labels, data.num_classes))
    return build_task_stream(pair, classes_per_task, seed)


def _task_sets(stream: TaskStream, indices_attr: str):
    return [(getattr(t, indices_attr), t.classes) for t in stream]


def run_stream(
    rhls,
    gamma: float,
    train_feats: np.ndarray,
    train_labels: np.ndarray,
    train_sets,
    eval_feats: np.ndarray,
    eval_labels: np.ndarray,
    eval_sets,
    chunk_size: int = DEFAULT_CHUNK,
    standardize: bool = False,
):
    """Learn tasks in order, scoring every seen task after each one.

    ``train_sets`` / ``eval_sets`` are per-task ``(indices, classes)`` pairs.
    Returns (members, AccuracyMatrix, per-task update seconds).
    """
    train_emb = [expand(train_feats, r, standardize) for r in rhls]
    classifiers: list[AnalyticClassifier | None] = [None] * len(rhls)
    matrix = AccuracyMatrix()
    seconds = []
    for t, (idx, classes) in enumerate(train_sets):
        block = LabelBlock.from_labels(train_labels[idx], classes)
        t0 = time.perf_counter()
        for k, emb in enumerate(train_emb):
            u = emb[idx]
            classifiers[k] = (
                fit_initial(u, block, gamma) if t == 0 else update(classifiers[k], u, block, chunk_size)
            )
        seconds.append(time.perf_counter() - t0)
        members = [Member(r, c) for r, c in zip(rhls, classifiers)]
        row = []
        for eidx, _ in eval_sets[: t + 1]:
            pred = _predict(members, eval_feats[eidx], standardize)
            row.append(task_accuracy_exact(pred, eval_labels[eidx]))
        matrix.add_row(row)
    return [Member(r, c) for r, c in zip(rhls, classifiers)], matrix, seconds


def _predict(members, features, standardize):
    if len(members) == 1:
        m = members[0]
        return predict_labels(m.classifier, expand(features, m.rhl, standardize))
    return ensemble_predict(members, features, standardize)


def member_rhls(config: ExperimentConfig, d_stack: int, run_seed: int):
    base = 1000 * run_seed
    return [
        init_rhl(d_stack, config.expansion_dim, base + i, config.expansion_scale)
        for i in range(config.ensemble_size)
    ]


def _holdout_split(stream: TaskStream, fraction: float, seed: int):
    rng = np.random.default_rng([seed, 0xA11])
    fit, held = [], []
    for t in stream:
        idx = rng.permutation(t.train_indices)
        n_held = max(1, int(round(fraction * idx.size)))
        if n_held >= idx.size:
            raise ConfigError(f"task {t.index} is too small for a validation holdout")
        held.append((np.sort(idx[:n_held]), t.classes))
        fit.append((np.sort(idx[n_held:]), t.classes))
    return fit, held


def select_gamma(config: ExperimentConfig, data: _Data, rhls, val_stream: TaskStream, exp_stream: TaskStream, seed: int):
    """Pick the grid value with the highest final average accuracy on validation data."""
    if len(val_stream):
        fit = _task_sets(val_stream, "train_indices")
        held = _task_sets(val_stream, "test_indices")
        eval_feats, eval_labels = data.test_features, data.test_labels
    else:
        fit, held = _holdout_split(exp_stream, config.validation_fraction, seed)
        eval_feats, eval_labels = data.train_features, data.train_labels
    scores = {}
    for g in config.gamma_grid:
        _, matrix, _ = run_stream(
            rhls, g, data.train_features, data.train_labels, fit,
            eval_feats, eval_labels, held, config.chunk_size, config.standardize_features,
        )
        scores[float(g)] = average_accuracy(matrix)
    best = max(scores, key=scores.get)  # first maximum in grid order
    return best, scores


def _vr(features, labels):
    try:
        return variance_ratio(features, labels)
    except ValueError:
        return None


def _joint_oracle_accuracy(members, gamma, data, train_sets, eval_sets, standardize):
    """Accuracy per task of the one-shot ridge fit on all training data."""
    idx = np.concatenate([i for i, _ in train_sets])
    blocks = [LabelBlock.from_labels(data.train_labels[i], c) for i, c in train_sets]
    v = block_diagonal_labels(blocks)
    registry = tuple(c for _, cs in train_sets for c in cs)
    oracle_members = []
    for m in members:
        w = joint_fit_oracle(expand(data.train_features[idx], m.rhl, standardize), v, gamma)
        oracle_members.append(Member(m.rhl, AnalyticClassifier(w, m.classifier.psi, gamma, registry, len(blocks))))
    accs = [
        task_accuracy_exact(_predict(oracle_members, data.test_features[e], standardize), data.test_labels[e])
        for e, _ in eval_sets
    ]
    return accs, oracle_members


def run_single(config: ExperimentConfig, data: _Data, seed: int, out_dir: Path | None = None) -> dict:
    stream = _stream(data, config.classes_per_task, seed)
    val_stream, exp_stream = stream.split(config.validation_tasks)
    if not len(exp_stream):
        raise ConfigError("no tasks left for the experiment stream")
    rhls = member_rhls(config, data.train_features.shape[1], seed)
    gamma, gamma_scores = select_gamma(config, data, rhls, val_stream, exp_stream, seed)
    train_sets = _task_sets(exp_stream, "train_indices")
    eval_sets = _task_sets(exp_stream, "test_indices")
    members, matrix, seconds = run_stream(
        rhls, gamma, data.train_features, data.train_labels, train_sets,
        data.test_features, data.test_labels, eval_sets, config.chunk_size, config.standardize_features,
    )
    oracle_accs, _ = _joint_oracle_accuracy(members, gamma, data, train_sets, eval_sets, config.standardize_features)

    test_idx = np.concatenate([e for e, _ in eval_sets])
    feats, labels = data.test_features[test_idx], data.test_labels[test_idx]
    final_matrix = [float(a) for a in matrix.to_list()[-1]]
    result = {
        "seed": seed,
        "class_order": list(stream.class_order),
        "validation_classes": list(val_stream.classes),
        "experiment_classes": list(exp_stream.classes),
        "gamma": gamma,
        "gamma_scores": {repr(g): s for g, s in gamma_scores.items()},
        "accuracy_matrix": matrix.to_list(),
        "final_accuracy": average_accuracy(matrix),
        "forgetting": forgetting(matrix) if len(matrix) > 1 else None,
        "vr_features": _vr(feats, labels),
        "vr_embedding": _vr(expand(feats, members[0].rhl, config.standardize_features), labels),
        "joint_oracle": {
            "task_accuracy": [float(a) for a in oracle_accs],
            "final_accuracy": float(sum(oracle_accs) / len(oracle_accs)),
            "max_abs_gap": max(abs(float(a) - b) for a, b in zip(oracle_accs, final_matrix)),
        },
        "timing": {"task_seconds": seconds},
    }
    if out_dir is not None:
        save_checkpoint(
            [m.classifier for m in members] if len(members) > 1 else members[0].classifier,
            {
                "run_seed": seed,
                "rhl": [m.rhl.params() for m in members],
                "standardize_features": config.standardize_features,
                **data.encoder_meta,
            },
            Path(out_dir) / "checkpoints" / f"{seed}.ckpt",
        )
    return result


def _summary(values):
    values = [v for v in values if v is not None]
    if not values:
        return {"mean": None, "std": None}
    return {
        "mean": statistics.fmean(values),
        "std": statistics.stdev(values) if len(values) > 1 else 0.0,
    }


def run_experiment(config: ExperimentConfig, out_dir=None) -> dict:
    """Run every seed; returns the report as a JSON-ready dict."""
    out_dir = out_dir if out_dir is not None else config.output_dir
    data = _prepare_data(config)
    runs = []
    for seed in config.seeds:
        t0 = time.perf_counter()
        runs.append(run_single(config, data, seed, out_dir))
        log.info("seed %s: A_T=%.4f gamma=%s (%.2fs)", seed, runs[-1]["final_accuracy"], runs[-1]["gamma"], time.perf_counter() - t0)
    return {
        "format_version": REPORT_VERSION,
        "config": config.to_dict(),
        "runs": runs,
        "aggregate": {
            "final_accuracy": _summary([r["final_accuracy"] for r in runs]),
            "forgetting": _summary([r["forgetting"] for r in runs]),
        },
    }


# -- reporting --------------------------------------------------------------------

CSV_FIELDS = ("seed", "gamma", "final_accuracy", "forgetting", "vr_features", "vr_embedding", "task_seconds")


def _jsonable(x):
    if isinstance(x, float) and math.isinf(x):
        return "inf"
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    return x


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, float):
        return "inf" if math.isinf(x) else repr(x)
    return str(x)


def report_body(report: dict) -> dict:
    """The report without wall-clock fields; deterministic for a fixed config."""
    body = json.loads(json.dumps(_jsonable(report)))
    for run in body["runs"]:
        run.pop("timing", None)
    return body


def emit_report(report: dict, path) -> None:
    """Write ``report.json`` and ``summary.csv`` into directory ``path``."""
    if not report.get("runs"):
        raise ValueError("report has no runs")
    for r in report["runs"]:
        if not 0 <= r["final_accuracy"] <= 1:
            raise ValueError(f"run {r['seed']}: final accuracy outside [0, 1]")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_FIELDS)
    for r in report["runs"]:
        writer.writerow(
            [
                r["seed"],
                _fmt(r["gamma"]),
                _fmt(r["final_accuracy"]),
                _fmt(r["forgetting"]),
                _fmt(r["vr_features"]),
                _fmt(r["vr_embedding"]),
                ";".join(repr(s) for s in r["timing"]["task_seconds"]),
            ]
        )
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    (path / "report.json").write_text(json.dumps(_jsonable(report), indent=2) + "\n")
    (path / "summary.csv").write_text(buf.getvalue())


# -- oracle check -------------------------------------------------------------------


def oracle_check(config: ExperimentConfig, checkpoint=None, seed=None) -> dict:
    """Compare recursive weights against the one-shot joint solve on the experiment stream.

    With a checkpoint, its stored weights are compared (data is regenerated
    from the config); otherwise the recursion is rerun at the first grid gamma.
    """
    data = _prepare_data(config)
    if checkpoint is not None:
        stored, meta = load_checkpoint(checkpoint)
        classifiers = stored if isinstance(stored, list) else [stored]
        seed = meta["run_seed"]
        rhls = [init_rhl(**p) for p in meta["rhl"]]
        standardize = meta.get("standardize_features", False)
        gamma = classifiers[0].gamma
    else:
        seed = config.seeds[0] if seed is None else seed
        rhls = member_rhls(config, data.train_features.shape[1], seed)
        standardize = config.standardize_features
        gamma = float(config.gamma_grid[0])
    stream = _stream(data, config.classes_per_task, seed)
    _, exp_stream = stream.split(config.validation_tasks)
    train_sets = _task_sets(exp_stream, "train_indices")
    eval_sets = _task_sets(exp_stream, "test_indices")
    if checkpoint is None:
        members, _, _ = run_stream(
            rhls, gamma, data.train_features, data.train_labels, train_sets,
            data.test_features, data.test_labels, eval_sets, config.chunk_size, standardize,
        )
    else:
        members = [Member(r, c) for r, c in zip(rhls, classifiers)]
    _, oracle = _joint_oracle_accuracy(members, gamma, data, train_sets, eval_sets, standardize)
    test_idx = np.concatenate([e for e, _ in eval_sets])
    out = []
    for m, o in zip(members, oracle):
        w, w_ref = m.classifier.weights, o.classifier.weights
        emb = expand(data.test_features[test_idx], m.rhl, standardize)
        out.append(
            {
                "rel_error": float(np.linalg.norm(w - w_ref) / np.linalg.norm(w_ref)),
                "prediction_agreement": float(
                    np.mean(predict_labels(m.classifier, emb) == predict_labels(o.classifier, emb))
                ),
            }
        )
    return {"seed": seed, "gamma": gamma, "members": out}
