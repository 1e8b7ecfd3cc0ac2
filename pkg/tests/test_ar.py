import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.signal import lfilter

import oracles
from depulse.ar import (
    ArModel, SegmentPartition, build_prediction_matrix, estimate_ar_covariance,
    partition_predictor,
)
from depulse.errors import DegenerateSignalError, DimensionError, PartitionError


def test_ar1_consistency():
    rng = np.random.default_rng(0)
    x = lfilter([1.0], [1.0, -0.9], rng.standard_normal(100_000))
    ar = estimate_ar_covariance(x, 1)
    assert 0.88 <= ar.a[0] <= 0.92
    assert ar.sigma_e2 == pytest.approx(1.0, rel=0.02)


def test_matches_independent_lstsq():
    rng = np.random.default_rng(1)
    x = lfilter([1.0], [1.0, -0.5, 0.3, -0.1], rng.standard_normal(2000))
    P = 3
    X = np.column_stack([x[P - i - 1:len(x) - i - 1] for i in range(P)])
    ref, *_ = np.linalg.lstsq(X, x[P:], rcond=None)
    np.testing.assert_allclose(estimate_ar_covariance(x, P).a, ref, rtol=1e-10)


def test_deterministic_recursion():
    x = 0.5 ** np.arange(30)
    ar = estimate_ar_covariance(x, 1)
    assert ar.a[0] == pytest.approx(0.5, abs=1e-12)
    assert ar.sigma_e2 < 1e-20


def test_degenerate_and_short():
    with pytest.raises(DegenerateSignalError):
        estimate_ar_covariance(np.zeros(100), 4)
    with pytest.raises(DimensionError):
        estimate_ar_covariance(np.ones(8), 4)


def test_ridge_warning_on_ill_conditioned_fit():
    x = np.sin(0.01 * np.arange(400))
    with pytest.warns(RuntimeWarning, match="ill-conditioned"):
        estimate_ar_covariance(x, 10)


def test_prediction_matrix_small():
    A = build_prediction_matrix(ArModel([0.5], 1.0), 4)
    assert A.tolist() == [[-0.5, 1, 0, 0], [0, -0.5, 1, 0], [0, 0, -0.5, 1]]
    A0 = build_prediction_matrix(ArModel([0.0, 0.0], 1.0), 5)
    assert np.array_equal(A0, np.eye(5)[2:])
    with pytest.raises(DimensionError):
        build_prediction_matrix(ArModel([0.1, 0.2], 1.0), 2)


@settings(max_examples=40, deadline=None)
@given(P=st.integers(1, 8), N=st.integers(10, 60), seed=st.integers(0, 10**6))
def test_matrix_equals_recursion(P, N, seed):
    rng = np.random.default_rng(seed)
    ar = oracles.random_ar(rng, P)
    if N <= P:
        return
    A = build_prediction_matrix(ar, N)
    x = rng.standard_normal(N)
    direct = np.array([x[n] - sum(ar.a[i] * x[n - i - 1] for i in range(P)) for n in range(P, N)])
    np.testing.assert_allclose(A @ x, direct, rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(ar.residuals(x), direct, rtol=1e-10, atol=1e-12)
    assert x @ A.T @ A @ x == pytest.approx(direct @ direct, rel=1e-10)
    assert np.all(np.count_nonzero(A, axis=1) <= P + 1)


def test_partition_and_reassembly():
    rng = np.random.default_rng(2)
    ar = oracles.random_ar(rng, 3)
    A = build_prediction_matrix(ar, 20)
    part = SegmentPartition(6, 4, 20)
    pp = partition_predictor(A, part.i0, part.i1, part.i2)
    assert pp.A0.shape[1] + pp.A1.shape[1] + pp.A2.shape[1] == 20
    R = pp.reassemble()
    changed = R != A
    # only tail columns, only coefficient entries
    assert not changed[:, :10].any()
    rows, cols = np.nonzero(changed)
    assert np.all(cols >= 10) and np.all(A[rows, cols] != 1.0)
    # undoing the zeroing gives the original
    R[:, 10:] = A[:, 10:]
    assert np.array_equal(R, A)
    # unit entries survive
    for j in range(10, 20):
        assert pp.A2[j - 3, j - 10] == 1.0


def test_partition_edge_cases():
    A = build_prediction_matrix(ArModel([0.0, 0.0], 1.0), 8)
    pp = partition_predictor(A, np.arange(8), [], [])
    assert np.array_equal(pp.A0, A)
    pp = partition_predictor(A, np.arange(3), np.arange(3, 5), np.arange(5, 8))
    assert np.array_equal(pp.A2, A[:, 5:])
    with pytest.raises(PartitionError):
        partition_predictor(A, np.arange(4), np.arange(3, 5), np.arange(5, 8))
    with pytest.raises(PartitionError):
        partition_predictor(A, np.arange(3), np.arange(5, 8), np.arange(3, 5))
    with pytest.raises(PartitionError):
        SegmentPartition(5, 4, 8)
