import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from cornn.errors import NumericalError, ShapeError
from cornn.linalg import as_matrix, inf_norm, inf_norm_vec, matvec, one_norm

finite = st.floats(-10, 10, allow_nan=False)


def test_matvec_identity():
    np.testing.assert_array_equal(matvec(np.eye(3), [1, 2, 3]), [1, 2, 3])


def test_matvec_zero():
    np.testing.assert_array_equal(matvec(np.zeros((2, 2)), [5, 7]), [0, 0])


def test_matvec_hand_product():
    np.testing.assert_array_equal(matvec([[1, 2], [3, 4]], [1, 1]), [3, 7])


def test_matvec_shape_mismatch():
    with pytest.raises(ShapeError):
        matvec(np.eye(3), [1, 2])


def test_inf_norm_examples():
    assert inf_norm(np.eye(4)) == 1
    assert inf_norm(np.zeros((3, 5))) == 0
    assert inf_norm([[1, -2], [3, 4]]) == 7


def test_one_norm_is_column_sum():
    assert one_norm([[1, -2], [3, 4]]) == 6


def test_inf_norm_vec_examples():
    assert inf_norm_vec([0, 0, 0]) == 0
    assert inf_norm_vec([-3, 2]) == 3
    assert inf_norm_vec(2 * np.ones(3)) == 2


def test_as_matrix_rejects_nonfinite():
    with pytest.raises(NumericalError):
        as_matrix([[1.0, np.nan]])


@given(arrays(np.float64, (3, 4), elements=finite), arrays(np.float64, 4, elements=finite),
       arrays(np.float64, 4, elements=finite), finite, finite)
def test_matvec_linear(M, u, v, a, b):
    lhs = matvec(M, a * u + b * v)
    rhs = a * matvec(M, u) + b * matvec(M, v)
    scale = np.abs(M).sum() * (abs(a) * np.abs(u).max() + abs(b) * np.abs(v).max()) + 1.0
    np.testing.assert_allclose(lhs, rhs, rtol=0, atol=1e-12 * scale)


@given(arrays(np.float64, (4, 3), elements=finite), arrays(np.float64, (3, 5), elements=finite))
def test_inf_norm_submultiplicative(A, B):
    assert inf_norm(A @ B) <= inf_norm(A) * inf_norm(B) * (1 + 1e-12) + 1e-12
