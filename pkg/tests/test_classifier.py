import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import relu_embeddings
from tsacl.classifier import (
    AnalyticClassifier,
    ClassCollisionError,
    LabelBlock,
    SingularSystemError,
    block_diagonal_labels,
    fit_initial,
    joint_fit_oracle,
    predict_labels,
    predict_scores,
    update,
    woodbury_check,
)


def rel(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


def ridge_lstsq(u, v, gamma):
    """Independent ridge solve: least squares on the augmented system [U; sqrt(g) I] W = [V; 0]."""
    d = u.shape[1]
    a = np.vstack([u, np.sqrt(gamma) * np.eye(d)])
    b = np.vstack([v, np.zeros((d, v.shape[1]))])
    return np.linalg.lstsq(a, b, rcond=None)[0]


def make_tasks(rng, n_tasks, n_per_task, d, classes_per_task=2):
    us, blocks = [], []
    for t in range(n_tasks):
        classes = tuple(range(t * classes_per_task, (t + 1) * classes_per_task))
        labels = rng.choice(classes, size=n_per_task)
        labels[: len(classes)] = classes  # each class present
        us.append(relu_embeddings(rng, n_per_task, d))
        blocks.append(LabelBlock.from_labels(labels, classes))
    return us, blocks


def run_recursive(us, blocks, gamma, chunk_size=256):
    clf = fit_initial(us[0], blocks[0], gamma)
    for u, b in zip(us[1:], blocks[1:]):
        clf = update(clf, u, b, chunk_size)
    return clf


# -- label blocks -------------------------------------------------------------------


def test_label_block():
    b = LabelBlock.from_labels([5, 2, 5], (5, 2))
    np.testing.assert_array_equal(b.onehot, [[1, 0], [0, 1], [1, 0]])
    with pytest.raises(ValueError):
        LabelBlock.from_labels([1, 3], (1, 2))
    with pytest.raises(ValueError):
        LabelBlock(np.array([[1.0, 1.0]]), (0, 1))


# -- fit_initial ----------------------------------------------------------------------


def test_identity_case():
    clf = fit_initial(np.eye(2), LabelBlock(np.eye(2), (0, 1)), 1.0)
    np.testing.assert_allclose(clf.weights, 0.5 * np.eye(2), rtol=0, atol=1e-15)
    np.testing.assert_allclose(clf.psi, 0.5 * np.eye(2), rtol=0, atol=1e-15)
    assert clf.registry == (0, 1) and clf.tasks_seen == 1


def test_gamma_zero_interpolates(rng):
    u = rng.standard_normal((3, 3)) + 3 * np.eye(3)
    block = LabelBlock(np.eye(3), (0, 1, 2))
    clf = fit_initial(u, block, 0.0)
    # direct linear solve oracle
    np.testing.assert_allclose(u @ clf.weights, block.onehot, atol=1e-10)
    np.testing.assert_allclose(clf.weights, np.linalg.solve(u, block.onehot), atol=1e-10)


def test_gamma_zero_singular():
    with pytest.raises(SingularSystemError):
        fit_initial(np.ones((3, 4)), LabelBlock.from_labels([0, 1, 0]), 0.0)
    with pytest.raises(SingularSystemError):
        joint_fit_oracle(np.ones((3, 4)), np.ones((3, 1)), 0.0)


def test_matches_independent_ridge(rng):
    u = rng.standard_normal((20, 5))
    block = LabelBlock.from_labels(rng.integers(0, 3, 20), (0, 1, 2))
    clf = fit_initial(u, block, 10.0)
    normal = np.linalg.solve(u.T @ u + 10 * np.eye(5), u.T @ block.onehot)
    assert rel(clf.weights, normal) <= 1e-10
    assert rel(clf.weights, ridge_lstsq(u, block.onehot, 10.0)) <= 1e-10


def test_non_finite_rejected():
    u = np.ones((2, 2))
    u[0, 0] = np.nan
    with pytest.raises(ValueError, match="non-finite"):
        fit_initial(u, LabelBlock.from_labels([0, 1]), 1.0)


# -- update -----------------------------------------------------------------------------


def test_two_tasks_match_joint_oracle(rng):
    us, blocks = make_tasks(rng, 2, 4, 6)
    clf = run_recursive(us, blocks, 1.0)
    ref = joint_fit_oracle(np.vstack(us), block_diagonal_labels(blocks), 1.0)
    assert rel(clf.weights, ref) <= 1e-10
    assert clf.registry == (0, 1, 2, 3) and clf.tasks_seen == 2


def test_oracle_cross_checked_by_lstsq(rng):
    us, blocks = make_tasks(rng, 3, 10, 8)
    u, v = np.vstack(us), block_diagonal_labels(blocks)
    assert rel(joint_fit_oracle(u, v, 10.0), ridge_lstsq(u, v, 10.0)) <= 1e-10


def test_oracle_single_task_equals_fit_initial(rng):
    us, blocks = make_tasks(rng, 1, 12, 5)
    clf = fit_initial(us[0], blocks[0], 3.0)
    assert rel(joint_fit_oracle(us[0], blocks[0].onehot, 3.0), clf.weights) <= 1e-12
    block_eye = block_diagonal_labels([LabelBlock(np.eye(2), (0, 1)), LabelBlock(np.eye(2), (2, 3))])
    np.testing.assert_allclose(joint_fit_oracle(np.eye(4), block_eye, 1.0), 0.5 * np.eye(4))


def test_class_collision(rng):
    us, blocks = make_tasks(rng, 2, 6, 4)
    clf = fit_initial(us[0], blocks[0], 1.0)
    with pytest.raises(ClassCollisionError):
        update(clf, us[1], LabelBlock.from_labels([1] * 6, (1,)), 4)


def test_update_errors(rng):
    us, blocks = make_tasks(rng, 2, 6, 4)
    clf = fit_initial(us[0], blocks[0], 1.0)
    with pytest.raises(ValueError, match="no samples"):
        update(clf, np.zeros((0, 4)), LabelBlock(np.zeros((0, 1)), (9,)))
    with pytest.raises(ValueError, match="width"):
        update(clf, np.zeros((2, 5)), LabelBlock.from_labels([9, 9], (9,)))
    with pytest.raises(ValueError):
        update(clf, us[1], blocks[1], chunk_size=0)


def test_chunk_size_one_vs_whole_task(rng):
    us, blocks = make_tasks(rng, 3, 30, 12)
    whole = run_recursive(us, blocks, 1.0, chunk_size=30)
    single = run_recursive(us, blocks, 1.0, chunk_size=1)
    ref = joint_fit_oracle(np.vstack(us), block_diagonal_labels(blocks), 1.0)
    assert rel(single.weights, whole.weights) <= 1e-9
    assert rel(single.weights, ref) <= 1e-9
    assert rel(whole.weights, ref) <= 1e-9


def test_update_leaves_input_untouched(rng):
    us, blocks = make_tasks(rng, 2, 6, 4)
    clf = fit_initial(us[0], blocks[0], 1.0)
    psi, w = clf.psi.copy(), clf.weights.copy()
    new = update(clf, us[1], blocks[1])
    np.testing.assert_array_equal(clf.psi, psi)
    np.testing.assert_array_equal(clf.weights, w)
    assert new.registry[: len(clf.registry)] == clf.registry


@settings(max_examples=40, deadline=None)
@given(
    seed=st.integers(0, 2**31),
    n_tasks=st.integers(2, 5),
    n=st.integers(1, 25),
    d=st.sampled_from([3, 8, 16, 40]),
    gamma=st.sampled_from([0.1, 1.0, 10.0, 100.0]),
    chunk=st.integers(1, 30),
)
def test_recursion_equals_joint_solve(seed, n_tasks, n, d, gamma, chunk):
    rng = np.random.default_rng(seed)
    us, blocks = make_tasks(rng, n_tasks, max(n, 2), d)
    clf = run_recursive(us, blocks, gamma, chunk)
    u_all = np.vstack(us)
    ref = joint_fit_oracle(u_all, block_diagonal_labels(blocks), gamma)
    assert rel(clf.weights, ref) <= 1e-9
    # psi is the inverse regularized Gram matrix, and stays symmetric
    gram = u_all.T @ u_all + gamma * np.eye(d)
    assert np.linalg.norm(clf.psi @ gram - np.eye(d)) / np.sqrt(d) <= 1e-8
    assert rel(clf.psi, clf.psi.T) <= 1e-9


# -- prediction ----------------------------------------------------------------------------


def _clf_with(weights, registry):
    weights = np.asarray(weights, float)
    return AnalyticClassifier(weights, np.eye(weights.shape[0]), 1.0, tuple(registry))


def test_argmax_mapping_and_ties():
    clf = _clf_with(np.eye(3), (5, 2, 7))
    assert predict_labels(clf, [[0.2, 0.9, 0.1]]).tolist() == [2]
    clf = _clf_with(np.eye(2), (3, 1))
    assert predict_labels(clf, [[0.5, 0.5]]).tolist() == [3]


def test_zero_row_and_single_column(rng):
    clf = _clf_with(rng.standard_normal((4, 3)), (0, 1, 2))
    assert (predict_scores(clf, np.zeros((1, 4))) == 0).all()
    one = _clf_with(rng.standard_normal((4, 1)), (9,))
    assert (predict_labels(one, rng.standard_normal((10, 4))) == 9).all()
    with pytest.raises(ValueError):
        predict_scores(clf, np.zeros((1, 5)))


def test_scores_match_naive_dot_products(rng):
    clf = _clf_with(rng.standard_normal((6, 4)), (0, 1, 2, 3))
    u = rng.standard_normal((5, 6))
    naive = np.array([[sum(u[i, k] * clf.weights[k, j] for k in range(6)) for j in range(4)] for i in range(5)])
    np.testing.assert_allclose(predict_scores(clf, u), naive, rtol=0, atol=1e-12)


def test_predictions_agree_with_oracle(rng):
    us, blocks = make_tasks(rng, 4, 50, 32)
    clf = run_recursive(us, blocks, 10.0, chunk_size=16)
    ref = joint_fit_oracle(np.vstack(us), block_diagonal_labels(blocks), 10.0)
    held = relu_embeddings(rng, 1000, 32)
    np.testing.assert_array_equal(
        predict_labels(clf, held), np.asarray(clf.registry)[np.argmax(held @ ref, axis=1)]
    )


# -- woodbury ---------------------------------------------------------------------------------


def test_woodbury_closed_forms():
    assert woodbury_check(np.eye(2), np.zeros((2, 2)), np.eye(2), np.zeros((2, 2))) == 0.0
    assert woodbury_check(2 * np.eye(2), np.eye(2), np.eye(2), np.eye(2)) <= 1e-14


def test_woodbury_random(rng):
    for _ in range(50):
        n, m = 8, 3
        a = rng.standard_normal((n, n)) + n * np.eye(n)
        c = rng.standard_normal((m, m)) + m * np.eye(m)
        u, v = rng.standard_normal((n, m)), rng.standard_normal((m, n))
        assert woodbury_check(a, u, c, v) <= 1e-10


def test_woodbury_singular():
    with pytest.raises(SingularSystemError):
        woodbury_check(np.zeros((2, 2)), np.eye(2), np.eye(2), np.eye(2))
    with pytest.raises(SingularSystemError):
        woodbury_check(np.eye(2), np.eye(2), np.zeros((2, 2)), np.eye(2))
