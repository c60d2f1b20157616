import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from maskdecomp.errors import InvalidArgumentError
from maskdecomp.operators import (
    diff_1d,
    diff_2d,
    diff_for_shape,
    project_box01,
    project_top_k,
    soft_threshold,
    tv,
)

finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


def vectors(min_size=1, max_size=40):
    return st.integers(min_size, max_size).flatmap(lambda n: arrays(np.float64, n, elements=finite))


def tv_direct(w, rows, cols):
    """Anisotropic TV summed pair by pair, no wraparound."""
    img = np.asarray(w).reshape(rows, cols)
    total = 0.0
    for i in range(rows):
        for j in range(cols):
            if i + 1 < rows:
                total += abs(img[i + 1, j] - img[i, j])
            if j + 1 < cols:
                total += abs(img[i, j + 1] - img[i, j])
    return total


# --- examples ----------------------------------------------------------------


def test_diff_1d_examples():
    np.testing.assert_array_equal(diff_1d(3).matrix.toarray(), [[-1, 1, 0], [0, -1, 1]])
    np.testing.assert_array_equal(diff_1d(2).matrix.toarray(), [[-1, 1]])
    np.testing.assert_array_equal(diff_1d(4) @ np.full(4, 5.0), [0, 0, 0])


def test_diff_2d_two_by_two():
    d = diff_2d(2, 2).matrix.toarray()
    dx = [[-1, 1, 0, 0], [0, 0, -1, 1]]
    dy = [[-1, 0, 1, 0], [0, -1, 0, 1]]
    np.testing.assert_array_equal(d, np.vstack([dx, dy]))


def test_diff_2d_row_count():
    d = diff_2d(5, 7)
    assert d.rows == 5 * 6 + 4 * 7


@pytest.mark.parametrize("bad", [(1, 5), (5, 1)])
def test_diff_2d_rejects_small(bad):
    with pytest.raises(InvalidArgumentError):
        diff_2d(*bad)


def test_diff_1d_rejects_small():
    with pytest.raises(InvalidArgumentError):
        diff_1d(1)


def test_diff_for_shape():
    assert diff_for_shape((6,)).rows == 5
    assert diff_for_shape((3, 4)).rows == 3 * 3 + 2 * 4
    with pytest.raises(InvalidArgumentError):
        diff_for_shape((2, 2, 2))


def test_soft_threshold_examples():
    np.testing.assert_array_equal(soft_threshold([3, -3], 1), [2, -2])
    np.testing.assert_array_equal(soft_threshold([0.5], 1), [0])
    v = np.random.default_rng(1).standard_normal(10)
    np.testing.assert_array_equal(soft_threshold(v, 0), v)
    with pytest.raises(InvalidArgumentError):
        soft_threshold(v, -0.1)


def test_box_examples():
    np.testing.assert_array_equal(project_box01([1.5, -0.2, 0.3]), [1.0, 0.0, 0.3])


def test_top_k_examples():
    np.testing.assert_array_equal(project_top_k([0.1, -3, 2, 0.5], 2), [0, -3, 2, 0])
    np.testing.assert_array_equal(project_top_k([1, -1, 1], 2), [1, -1, 0])
    v = np.array([4.0, -2.0, 1.0])
    np.testing.assert_array_equal(project_top_k(v, 3), v)
    np.testing.assert_array_equal(project_top_k(v, 0), [0, 0, 0])


def test_tv_examples():
    assert tv(np.array([0, 0, 1, 1, 0.0]), diff_1d(5)) == 2
    assert tv(np.ones(9), diff_2d(3, 3)) == 0
    w = np.random.default_rng(2).random(9)
    assert abs(tv(w, diff_2d(3, 3)) - tv_direct(w, 3, 3)) <= 1e-12
    m = (np.random.default_rng(3).random(16) > 0.5).astype(float)
    assert abs(tv(m, diff_2d(4, 4)) - tv_direct(m, 4, 4)) <= 1e-12


def test_tv_dimension_mismatch():
    with pytest.raises(InvalidArgumentError):
        tv(np.ones(5), diff_1d(4))


# --- properties ----------------------------------------------------------------


@settings(max_examples=200)
@given(data=st.data(), t=st.floats(0, 1e3))
def test_soft_threshold_nonexpansive(data, t):
    a = data.draw(vectors())
    b = data.draw(arrays(np.float64, a.size, elements=finite))
    lhs = np.linalg.norm(soft_threshold(a, t) - soft_threshold(b, t))
    assert lhs <= np.linalg.norm(a - b) * (1 + 1e-12) + 1e-9


@settings(max_examples=200)
@given(v=vectors())
def test_box_idempotent_and_bounded(v):
    p = project_box01(v)
    assert np.all((p >= 0) & (p <= 1))
    np.testing.assert_array_equal(project_box01(p), p)


@settings(max_examples=200)
@given(v=vectors(), k=st.integers(0, 50))
def test_top_k_support(v, k):
    out = project_top_k(v, k)
    assert np.count_nonzero(out) <= k
    support = out != 0
    np.testing.assert_array_equal(out[support], v[support])
    # nothing dropped is strictly larger than anything kept
    kept = np.abs(v[support])
    dropped = np.abs(v[~support])
    if kept.size and dropped.size:
        assert dropped.max() <= kept.min()


@settings(max_examples=100)
@given(rows=st.integers(2, 9), cols=st.integers(2, 9), c=finite)
def test_diff_annihilates_constants(rows, cols, c):
    assert np.all(diff_2d(rows, cols) @ np.full(rows * cols, c) == 0)
    assert np.all(diff_1d(cols) @ np.full(cols, c) == 0)


@settings(max_examples=100)
@given(rows=st.integers(2, 9), cols=st.integers(2, 9))
def test_diff_rows_have_one_minus_one_plus(rows, cols):
    m = diff_2d(rows, cols).matrix.toarray()
    assert np.all((m != 0).sum(axis=1) == 2)
    assert np.all(m.min(axis=1) == -1) and np.all(m.max(axis=1) == 1)


@settings(max_examples=200)
@given(data=st.data(), rows=st.integers(2, 8), cols=st.integers(2, 8))
def test_tv_matrix_equals_direct_sum(data, rows, cols):
    w = data.draw(arrays(np.float64, rows * cols, elements=st.floats(-100, 100)))
    assert abs(tv(w, diff_2d(rows, cols)) - tv_direct(w, rows, cols)) <= 1e-12 * max(1.0, np.abs(w).sum())
    v = w[:cols]
    assert abs(tv(v, diff_1d(cols)) - np.abs(np.diff(v)).sum()) <= 1e-12 * max(1.0, np.abs(v).sum())
