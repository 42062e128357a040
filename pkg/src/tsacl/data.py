"""Time-series datasets: binary ingestion, synthetic generation and task streams.

On-disk layout of a dataset directory::

    manifest.json        {"channels", "length", "num_classes", "train_n", "test_n", "dtype": "f32le"}
    train.bin, test.bin  little-endian float32, sample-major [N][C][L]
    train_labels.bin     little-endian uint32, length N (same for test)
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SPLITS = ("train", "test")
MANIFEST = "manifest.json"
MANIFEST_KEYS = ("channels", "length", "num_classes", "train_n", "test_n", "dtype")


class DatasetFormatError(ValueError):
    """Raised when files on disk do not agree with the manifest.

    ``field`` names the offending manifest entry or file.
    """

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass(frozen=True, eq=False)
class TimeSeriesDataset:
    samples: np.ndarray  # [N, C, L] float32
    labels: np.ndarray  # [N] int64
    num_classes: int
    split: str = "train"

    def __post_init__(self):
        if self.split not in SPLITS:
            raise ValueError(f"split must be one of {SPLITS}, got {self.split!r}")
        if self.samples.ndim != 3:
            raise ValueError(f"samples must be [N, C, L], got shape {self.samples.shape}")
        if self.labels.shape != (self.samples.shape[0],):
            raise ValueError("labels must be a vector with one entry per sample")
        if self.num_classes < 1:
            raise ValueError("num_classes must be positive")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise DatasetFormatError("labels", f"label out of range 0..{self.num_classes - 1}")
        if self.split == "train":
            missing = set(range(self.num_classes)) - set(np.unique(self.labels).tolist())
            if missing:
                raise DatasetFormatError("labels", f"classes absent from train split: {sorted(missing)}")
        self.samples.flags.writeable = False
        self.labels.flags.writeable = False

    @property
    def n(self) -> int:
        return self.samples.shape[0]

    @property
    def channels(self) -> int:
        return self.samples.shape[1]

    @property
    def length(self) -> int:
        return self.samples.shape[2]


def _read_manifest(root: Path) -> dict:
    path = root / MANIFEST
    if not path.is_file():
        raise DatasetFormatError(MANIFEST, f"missing file {path}")
    manifest = json.loads(path.read_text())
    return manifest


def _require(manifest: dict, key: str):
    if key not in manifest:
        raise DatasetFormatError(key, "missing manifest field")
    return manifest[key]


def _read_exact(path: Path, dtype: str, count: int, field: str) -> np.ndarray:
    if not path.is_file():
        raise DatasetFormatError(field, f"missing file {path}")
    raw = path.read_bytes()
    itemsize = np.dtype(dtype).itemsize
    if len(raw) != count * itemsize:
        raise DatasetFormatError(
            field, f"byte-count mismatch: expected {count * itemsize}, found {len(raw)}"
        )
    return np.frombuffer(raw, dtype=dtype).copy()


def load_labels(root, split: str) -> tuple[np.ndarray, int]:
    """Read ``<split>_labels.bin``; returns (labels, num_classes)."""
    root = Path(root)
    manifest = _read_manifest(root)
    n = int(_require(manifest, f"{split}_n"))
    num_classes = int(_require(manifest, "num_classes"))
    labels = _read_exact(root / f"{split}_labels.bin", "<u4", n, f"{split}_labels.bin")
    if labels.size and labels.max() >= num_classes:
        raise DatasetFormatError(
            f"{split}_labels.bin", f"label {int(labels.max())} out of range for {num_classes} classes"
        )
    return labels.astype(np.int64), num_classes


def load_dataset(root, split: str) -> TimeSeriesDataset:
    if split not in SPLITS:
        raise ValueError(f"split must be one of {SPLITS}")
    root = Path(root)
    manifest = _read_manifest(root)
    for key in MANIFEST_KEYS:
        _require(manifest, key)
    if manifest["dtype"] != "f32le":
        raise DatasetFormatError("dtype", f"unsupported dtype {manifest['dtype']!r}")
    c, length = int(manifest["channels"]), int(manifest["length"])
    n = int(manifest[f"{split}_n"])
    samples = _read_exact(root / f"{split}.bin", "<f4", n * c * length, f"{split}.bin")
    labels, num_classes = load_labels(root, split)
    return TimeSeriesDataset(
        samples.reshape(n, c, length).astype(np.float32, copy=False),
        labels,
        num_classes,
        split,
    )


def write_manifest(root, manifest: dict) -> None:
    Path(root).mkdir(parents=True, exist_ok=True)
    (Path(root) / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def write_dataset(train: TimeSeriesDataset, test: TimeSeriesDataset, root) -> None:
    if train.samples.shape[1:] != test.samples.shape[1:] or train.num_classes != test.num_classes:
        raise ValueError("train and test splits disagree on shape or class count")
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    for ds in (train, test):
        ds.samples.astype("<f4").tofile(root / f"{ds.split}.bin")
        ds.labels.astype("<u4").tofile(root / f"{ds.split}_labels.bin")
    write_manifest(
        root,
        {
            "channels": train.channels,
            "length": train.length,
            "num_classes": train.num_classes,
            "train_n": train.n,
            "test_n": test.n,
            "dtype": "f32le",
        },
    )


# -- synthetic data ---------------------------------------------------------


@dataclass(frozen=True)
class SyntheticSpec:
    """Classes built from smooth templates plus per-subject offsets.

    Every (class, subject) pair forms its own sub-cluster; ``subject_scale``
    controls how far apart the sub-clusters of one class drift.
    """

    num_classes: int = 8
    subjects_per_class: int = 4
    samples_per_subject: int = 50
    channels: int = 3
    length: int = 64
    template_seed: int = 0
    subject_scale: float = 1.0
    noise_scale: float = 0.1
    seed: int = 0
    # None: same as samples_per_subject
    test_samples_per_subject: int | None = None

    def __post_init__(self):
        for name in ("num_classes", "subjects_per_class", "samples_per_subject", "channels", "length"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.test_samples_per_subject is not None and self.test_samples_per_subject < 1:
            raise ValueError("test_samples_per_subject must be positive")
        if self.subject_scale < 0 or self.noise_scale < 0:
            raise ValueError("scales must be non-negative")


def _sinusoids(rng, count, channels, t, freq_range, n_terms):
    """[count, channels, len(t)] sums of ``n_terms`` random sinusoids."""
    shape = (count, channels, n_terms, 1)
    freq = rng.uniform(*freq_range, size=shape)
    phase = rng.uniform(0, 2 * np.pi, size=shape)
    amp = rng.normal(size=shape)
    return (amp * np.sin(2 * np.pi * freq * t + phase)).sum(axis=2) / np.sqrt(n_terms)


def generate_synthetic(spec: SyntheticSpec) -> tuple[TimeSeriesDataset, TimeSeriesDataset]:
    t = np.arange(spec.length) / spec.length
    # templates: 3 sinusoids per channel, 1..8 cycles over the window
    templates = _sinusoids(
        np.random.default_rng(spec.template_seed), spec.num_classes, spec.channels, t, (1.0, 8.0), 3
    )
    rng = np.random.default_rng(spec.seed)
    # subject offsets: 2 low-frequency sinusoids, under 1.5 cycles
    offsets = _sinusoids(
        rng, spec.num_classes * spec.subjects_per_class, spec.channels, t, (0.1, 1.5), 2
    ).reshape(spec.num_classes, spec.subjects_per_class, spec.channels, spec.length)
    base = templates[:, None] + spec.subject_scale * offsets

    splits = []
    per_subject = {
        "train": spec.samples_per_subject,
        "test": spec.test_samples_per_subject or spec.samples_per_subject,
    }
    for split in SPLITS:
        k = per_subject[split]
        noise = rng.normal(size=(spec.num_classes, spec.subjects_per_class, k, spec.channels, spec.length))
        x = base[:, :, None] + spec.noise_scale * noise
        labels = np.repeat(np.arange(spec.num_classes), spec.subjects_per_class * k)
        splits.append(
            TimeSeriesDataset(
                x.reshape(-1, spec.channels, spec.length).astype(np.float32),
                labels.astype(np.int64),
                spec.num_classes,
                split,
            )
        )
    return splits[0], splits[1]


def subject_ids(spec: SyntheticSpec, split: str) -> np.ndarray:
    """Subject index of every sample produced by :func:`generate_synthetic`."""
    k = spec.samples_per_subject if split == "train" else (spec.test_samples_per_subject or spec.samples_per_subject)
    one_class = np.repeat(np.arange(spec.subjects_per_class), k)
    return np.tile(one_class, spec.num_classes)


# -- task streams -------------------------------------------------------------


@dataclass(frozen=True)
class TaskSpec:
    index: int  # 1-based
    classes: tuple[int, ...]
    train_indices: np.ndarray = field(repr=False)
    test_indices: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class TaskStream:
    tasks: tuple[TaskSpec, ...]
    class_order: tuple[int, ...]

    def __len__(self):
        return len(self.tasks)

    def __iter__(self):
        return iter(self.tasks)

    def __getitem__(self, i):
        return self.tasks[i]

    @property
    def classes(self) -> tuple[int, ...]:
        return tuple(c for task in self.tasks for c in task.classes)

    def split(self, n_leading: int) -> tuple["TaskStream", "TaskStream"]:
        """Split into (leading tasks, remaining tasks); both are re-indexed from 1."""
        if not 0 <= n_leading <= len(self.tasks):
            raise ValueError(f"cannot take {n_leading} leading tasks from a {len(self.tasks)}-task stream")
        return _reindex(self.tasks[:n_leading]), _reindex(self.tasks[n_leading:])


def _reindex(tasks) -> TaskStream:
    tasks = tuple(
        TaskSpec(i + 1, t.classes, t.train_indices, t.test_indices) for i, t in enumerate(tasks)
    )
    return TaskStream(tasks, tuple(c for t in tasks for c in t.classes))


def build_task_stream(dataset_pair, classes_per_task: int, shuffle_seed: int) -> TaskStream:
    train, test = dataset_pair
    num_classes = train.num_classes
    if classes_per_task < 1:
        raise ValueError("classes_per_task must be positive")
    if num_classes % classes_per_task:
        raise ValueError(
            f"{num_classes} classes cannot be split evenly into tasks of {classes_per_task}"
        )
    order = np.random.default_rng(shuffle_seed).permutation(num_classes)
    tasks = []
    for i in range(num_classes // classes_per_task):
        classes = tuple(int(c) for c in order[i * classes_per_task : (i + 1) * classes_per_task])
        tasks.append(
            TaskSpec(
                i + 1,
                classes,
                np.flatnonzero(np.isin(train.labels, classes)),
                np.flatnonzero(np.isin(test.labels, classes)),
            )
        )
    return TaskStream(tuple(tasks), tuple(int(c) for c in order))
