import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tsacl.data import (
    DatasetFormatError,
    SyntheticSpec,
    TimeSeriesDataset,
    build_task_stream,
    generate_synthetic,
    load_dataset,
    subject_ids,
    write_dataset,
)


def _files(root):
    return {p.name: p.read_bytes() for p in sorted(root.iterdir())}


def test_round_trip_is_byte_identical(tmp_path, small_pair):
    write_dataset(*small_pair, tmp_path / "a")
    train, test = load_dataset(tmp_path / "a", "train"), load_dataset(tmp_path / "a", "test")
    write_dataset(train, test, tmp_path / "b")
    assert _files(tmp_path / "a") == _files(tmp_path / "b")
    np.testing.assert_array_equal(train.samples, small_pair[0].samples)
    np.testing.assert_array_equal(test.labels, small_pair[1].labels)


def test_uci_har_shaped_manifest(tmp_path):
    # 7352 train samples of 9 x 128 over 6 classes
    n, c, length = 7352, 9, 128
    labels = np.arange(n) % 6
    samples = np.zeros((n, c, length), dtype=np.float32)
    train = TimeSeriesDataset(samples, labels, 6, "train")
    test = TimeSeriesDataset(samples[:12], labels[:12], 6, "test")
    write_dataset(train, test, tmp_path)
    ds = load_dataset(tmp_path, "train")
    assert (ds.n, ds.channels, ds.length, ds.num_classes) == (7352, 9, 128, 6)
    assert (tmp_path / "train.bin").stat().st_size == n * c * length * 4


def test_truncated_tensor_file(tmp_path, small_pair):
    write_dataset(*small_pair, tmp_path)
    raw = (tmp_path / "train.bin").read_bytes()
    (tmp_path / "train.bin").write_bytes(raw[:-4])
    with pytest.raises(DatasetFormatError, match="byte-count") as e:
        load_dataset(tmp_path, "train")
    assert e.value.field == "train.bin"


def test_label_out_of_range(tmp_path, small_pair):
    write_dataset(*small_pair, tmp_path)
    labels = np.fromfile(tmp_path / "test_labels.bin", dtype="<u4")
    labels[0] = 6
    labels.tofile(tmp_path / "test_labels.bin")
    with pytest.raises(DatasetFormatError, match="out of range") as e:
        load_dataset(tmp_path, "test")
    assert e.value.field == "test_labels.bin"


def test_missing_file_and_field(tmp_path, small_pair):
    write_dataset(*small_pair, tmp_path)
    (tmp_path / "test.bin").unlink()
    with pytest.raises(DatasetFormatError, match="missing file"):
        load_dataset(tmp_path, "test")
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    del manifest["length"]
    (tmp_path / "manifest.json").write_text(json.dumps(manifest))
    with pytest.raises(DatasetFormatError) as e:
        load_dataset(tmp_path, "train")
    assert e.value.field == "length"


def test_train_split_must_cover_all_classes():
    with pytest.raises(DatasetFormatError):
        TimeSeriesDataset(np.zeros((2, 1, 4), np.float32), np.array([0, 0]), 2, "train")


# -- synthetic -------------------------------------------------------------------


def test_zero_scales_give_identical_class_members():
    spec = SyntheticSpec(num_classes=3, subjects_per_class=2, samples_per_subject=4, subject_scale=0, noise_scale=0)
    train, test = generate_synthetic(spec)
    for c in range(3):
        x = train.samples[train.labels == c]
        assert (x == x[0]).all()
        np.testing.assert_array_equal(test.samples[test.labels == c][0], x[0])


def test_synthetic_is_deterministic():
    spec = SyntheticSpec(num_classes=4, subjects_per_class=3, samples_per_subject=5, seed=9)
    a, b = generate_synthetic(spec), generate_synthetic(spec)
    for x, y in zip(a, b):
        assert x.samples.tobytes() == y.samples.tobytes()
        assert x.labels.tobytes() == y.labels.tobytes()
    other = generate_synthetic(SyntheticSpec(num_classes=4, subjects_per_class=3, samples_per_subject=5, seed=10))
    assert other[0].samples.tobytes() != a[0].samples.tobytes()


def test_subjects_form_sub_clusters():
    spec = SyntheticSpec(num_classes=8, subjects_per_class=4, samples_per_subject=10, subject_scale=1.0, noise_scale=0.1)
    train, _ = generate_synthetic(spec)
    subj = subject_ids(spec, "train")
    for c in range(8):
        mask = train.labels == c
        x = train.samples[mask].reshape(mask.sum(), -1).astype(np.float64)
        s = subj[mask]
        # brute-force pairwise distances
        dist = np.sqrt(((x[:, None, :] - x[None, :, :]) ** 2).sum(-1))
        same = s[:, None] == s[None, :]
        off_diag = ~np.eye(len(s), dtype=bool)
        assert dist[same & off_diag].mean() < dist[~same].mean()


def test_both_splits_contain_every_subject():
    spec = SyntheticSpec(num_classes=2, subjects_per_class=3, samples_per_subject=4, test_samples_per_subject=2)
    train, test = generate_synthetic(spec)
    assert set(subject_ids(spec, "train")) == set(subject_ids(spec, "test")) == {0, 1, 2}
    assert (train.n, test.n) == (24, 12)


@pytest.mark.parametrize("kw", [{"num_classes": 0}, {"noise_scale": -1.0}, {"length": 0}])
def test_invalid_spec(kw):
    with pytest.raises(ValueError):
        SyntheticSpec(**kw)


# -- task streams ------------------------------------------------------------------


def test_six_classes_three_tasks(small_pair):
    stream = build_task_stream(small_pair, 2, shuffle_seed=0)
    assert len(stream) == 3
    train, test = small_pair
    for task in stream:
        assert set(train.labels[task.train_indices]) <= set(task.classes)
        assert set(test.labels[task.test_indices]) <= set(task.classes)
        assert len(task.train_indices) == np.isin(train.labels, task.classes).sum()


def test_eighteen_classes_nine_tasks():
    spec = SyntheticSpec(num_classes=18, subjects_per_class=1, samples_per_subject=1, length=8)
    stream = build_task_stream(generate_synthetic(spec), 2, 5)
    assert len(stream) == 9
    sets = [set(t.classes) for t in stream]
    assert set().union(*sets) == set(range(18))
    assert sum(len(s) for s in sets) == 18


def test_indivisible_class_count():
    spec = SyntheticSpec(num_classes=7, subjects_per_class=1, samples_per_subject=1, length=8)
    with pytest.raises(ValueError, match="evenly"):
        build_task_stream(generate_synthetic(spec), 2, 0)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), k=st.sampled_from([1, 2, 3, 6]))
def test_partition_property(small_pair, seed, k):
    stream = build_task_stream(small_pair, k, seed)
    assert list(stream.classes) == list(stream.class_order)
    assert sorted(stream.classes) == list(range(6))
    assert all(len(t.classes) == k for t in stream)


def test_split_into_validation_and_experiment(small_pair):
    stream = build_task_stream(small_pair, 2, 1)
    val, exp = stream.split(1)
    assert [t.index for t in exp] == [1, 2]
    assert val.classes + exp.classes == stream.classes
    with pytest.raises(ValueError):
        stream.split(4)
