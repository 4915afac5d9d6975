import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sparseinv.errors import DimensionMismatch, SingularOperator
from sparseinv.operator import (
    apply_forward,
    back_transform,
    build_exponential_operator,
    build_from_matrix,
    exponential_matrix,
    load_operator,
    save_matrix,
)


def test_exponential_entries():
    A = build_exponential_operator(128).A
    assert A[0, 0] == 1.0
    assert A[1, 0] == pytest.approx(math.exp(-1 / 128), abs=0, rel=1e-15)
    assert A[0, 1] == 0.0
    A4 = exponential_matrix(4)
    assert A4[3, 0] == pytest.approx(0.4723665527410147, rel=1e-14)


@pytest.mark.parametrize("n", [2, 3, 8, 33, 128])
def test_exponential_lower_unit_triangular(n):
    A = exponential_matrix(n)
    assert np.all(np.diag(A) == 1.0)
    assert np.all(np.triu(A, 1) == 0.0)


def test_identity_operator():
    op = build_from_matrix(np.eye(5))
    assert op.cond_estimate == pytest.approx(1.0)
    y = np.arange(5.0)
    np.testing.assert_array_equal(back_transform(op, y, 0.0).z, y)
    np.testing.assert_array_equal(apply_forward(op, y), y)


def test_zero_matrix_is_singular():
    with pytest.raises(SingularOperator):
        build_from_matrix(np.zeros((6, 6)))


def test_rank_deficient_columns_rejected():
    A = np.ones((6, 3))
    with pytest.raises(SingularOperator):
        build_from_matrix(A)


def test_wide_matrix_rejected():
    with pytest.raises(DimensionMismatch):
        build_from_matrix(np.ones((3, 5)))


def test_gram_factorization_residual(rng):
    A = rng.standard_normal((16, 8))
    op = build_from_matrix(A)
    for _ in range(10):
        x = rng.standard_normal(8)
        x /= np.linalg.norm(x)
        back = op.gram_solve(A.T @ (A @ x))
        assert np.linalg.norm(back - x) <= 1e-10


def test_back_transform_exponential_residual(rng):
    op = build_exponential_operator(32)
    y = rng.standard_normal(32)
    z = back_transform(op, y, 1.0).z
    A = op.A
    rhs = A.T @ y
    assert np.linalg.norm(A.T @ A @ z - rhs) / np.linalg.norm(rhs) <= 1e-8


def test_noiseless_consistency(rng):
    op = build_exponential_operator(64)
    f = rng.standard_normal(64)
    z = back_transform(op, apply_forward(op, f), 0.0).z
    assert np.linalg.norm(z - f) / np.linalg.norm(f) <= 1e-8


def test_basis_vector_extracts_column():
    op = build_exponential_operator(8)
    e1 = np.zeros(8)
    e1[0] = 1.0
    np.testing.assert_array_equal(apply_forward(op, e1), op.A[:, 0])
    np.testing.assert_array_equal(apply_forward(op, np.zeros(8)), np.zeros(8))


def test_dimension_checks():
    op = build_exponential_operator(8)
    with pytest.raises(DimensionMismatch):
        back_transform(op, np.zeros(7), 1.0)
    with pytest.raises(DimensionMismatch):
        apply_forward(op, np.zeros(9))


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 40), st.integers(0, 2**32 - 1))
def test_back_transform_linear(n, seed):
    op = build_exponential_operator(n)
    rng = np.random.default_rng(seed)
    y1, y2 = rng.standard_normal((2, n))
    z12 = back_transform(op, y1 + y2, 0.0).z
    z1 = back_transform(op, y1, 0.0).z
    z2 = back_transform(op, y2, 0.0).z
    assert np.linalg.norm(z12 - z1 - z2) <= 1e-10 * max(1.0, np.linalg.norm(z12))


@settings(max_examples=20, deadline=None)
@given(st.integers(2, 64), st.integers(0, 2**32 - 1))
def test_round_trip_square(n, seed):
    op = build_exponential_operator(n)
    f = np.random.default_rng(seed).standard_normal(n)
    z = back_transform(op, apply_forward(op, f), 0.0).z
    assert np.linalg.norm(z - f) <= 1e-8 * np.linalg.norm(f)


def test_matrix_file_round_trip(tmp_path, rng):
    A = rng.standard_normal((6, 4))
    path = tmp_path / "A.txt"
    save_matrix(path, A)
    op = load_operator(path)
    np.testing.assert_array_equal(op.A, A)
