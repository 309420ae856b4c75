import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dopinf.data import LocalBlock
from dopinf.errors import DegenerateVariableError
from dopinf.transform import (SnapshotScaler, TransformParams, center_in_place,
                              compute_global_scales, fit_transform_block,
                              forward_transform, inverse_transform)

from conftest import collective


def block_of(values, n_vars=1, rank=0, start=0):
    values = np.array(values, dtype=np.float64)
    nx_i = values.shape[0] // n_vars
    return LocalBlock(rank, (start, start + nx_i), n_vars, values)


def test_center_hand_example():
    block, means = center_in_place(block_of([[1, 3], [2, 2]]))
    assert means.tolist() == [2.0, 2.0]
    assert block.values.tolist() == [[-1.0, 1.0], [0.0, 0.0]]


def test_center_zero_mean_unchanged():
    X = np.array([[1.0, -1.0], [-2.0, 2.0]])
    block, means = center_in_place(block_of(X))
    assert np.array_equal(means, [0.0, 0.0])
    assert np.array_equal(block.values, X)


def test_center_random_rows_sum_to_zero(rng):
    X = rng.standard_normal((20, 7)) + 5.0
    block, means = center_in_place(block_of(X))
    assert np.allclose(means, X.sum(axis=1) / 7, rtol=1e-14)
    row_scale = np.max(np.abs(X), axis=1)
    assert np.all(np.abs(block.values.sum(axis=1)) <= 1e-12 * row_scale)


def test_scale_two_ranks():
    vals = [np.array([[-3.0, 1.0]]), np.array([[-2.0, 5.0]])]
    out = collective(lambda c: compute_global_scales(vals[c.rank], 1, c), 2)
    assert out[0].tolist() == [5.0] and out[1].tolist() == [5.0]


def test_scale_single_rank_bounds():
    block = block_of([[-4.0, 2.0]])
    scales = compute_global_scales(block.values, 1)
    assert scales.tolist() == [4.0]
    params = fit_transform_block(block_of([[-3.0, 3.0, 0.0], [1.0, 1.0, 1.0]],
                                          n_vars=1), scaling=True)
    assert params.scales.tolist() == [3.0]


def test_scaled_values_in_range():
    values = np.array([[-4.0, 2.0]])
    scaled = values / compute_global_scales(values, 1)[0]
    assert scaled.tolist() == [[-1.0, 0.5]]


def test_degenerate_variable():
    block = block_of([[1.0, 1.0], [2.0, 2.0], [0.0, 3.0], [1.0, 2.0]], n_vars=2)
    with pytest.raises(DegenerateVariableError) as info:
        fit_transform_block(block, scaling=True, var_names=("p", "u"))
    assert info.value.variable == 0
    assert "p" in str(info.value)


def test_degenerate_only_on_one_rank_is_fine():
    # Constant on rank 0 but varying on rank 1: the global scale is positive.
    vals = [np.zeros((2, 3)), np.array([[0.0, 1.0, -1.0], [0, 0, 0]])]
    out = collective(lambda c: compute_global_scales(vals[c.rank], 1, c), 2)
    assert out[0].tolist() == [1.0]


def test_round_trip_with_scaling(rng):
    X = rng.standard_normal((12, 9)) * 3 + 1
    block = block_of(X.copy(), n_vars=3)
    params = fit_transform_block(block, scaling=True)
    back = inverse_transform(block.values, params)
    assert np.max(np.abs(back - X)) <= 1e-12 * np.max(np.abs(X))
    fwd = forward_transform(X, params)
    assert np.max(np.abs(fwd - block.values)) <= 1e-12


def test_zero_reconstruction_gives_mean(rng):
    X = rng.standard_normal((6, 5))
    params = fit_transform_block(block_of(X.copy(), n_vars=2), scaling=True)
    out = inverse_transform(np.zeros((6, 4)), params)
    assert np.array_equal(out, np.repeat(params.local_means[:, None], 4, 1))


def test_inverse_without_scaling_adds_mean(rng):
    X = rng.standard_normal((4, 5))
    params = fit_transform_block(block_of(X.copy()))
    Y = rng.standard_normal((4, 3))
    assert np.array_equal(inverse_transform(Y, params),
                          Y + params.local_means[:, None])
    assert params.scales is None and not params.scaling_enabled


def test_inverse_row_selection_and_errors(rng):
    X = rng.standard_normal((4, 5))
    params = fit_transform_block(block_of(X.copy(), n_vars=2), scaling=True)
    y = np.ones(3)
    out = inverse_transform(y, params, [3])
    assert np.allclose(out, params.scales[1] + params.local_means[3])
    with pytest.raises(IndexError):
        inverse_transform(y, params, [4])
    with pytest.raises(IndexError):
        inverse_transform(y, params, [-1])


def test_distributed_scaling_matches_serial(rng):
    X = rng.standard_normal((2 * 12, 6))
    A, B = X[:12], X[12:]

    def fn(c):
        lo, hi = c.rank * 6, (c.rank + 1) * 6
        block = block_of(np.vstack([A[lo:hi], B[lo:hi]]), n_vars=2,
                         rank=c.rank, start=lo)
        return fit_transform_block(block, c, scaling=True).scales

    out = collective(fn, 2)
    serial = fit_transform_block(block_of(X.copy(), n_vars=2),
                                 scaling=True).scales
    assert np.array_equal(out[0], out[1])
    assert np.array_equal(out[0], serial)


finite = st.floats(-1e6, 1e6, allow_nan=False)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(2, 8)),
              elements=finite))
def test_centering_idempotent(X):
    block, _ = center_in_place(block_of(X.copy()))
    _, means = center_in_place(block)
    assert np.all(np.abs(means) <= 1e-12 * max(1.0, np.max(np.abs(X))))


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(2, 8)),
              elements=finite))
def test_scaled_entries_bounded(X):
    X = X.copy()
    X[0, 0] += 1.0  # make sure the variable is not constant
    X[0, 1] -= 1.0
    block = block_of(X.copy())
    try:
        fit_transform_block(block, scaling=True)
    except DegenerateVariableError:
        return
    assert np.max(np.abs(block.values)) <= 1 + 1e-15


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(2, 8)),
              elements=st.floats(-1e3, 1e3)),
       st.booleans())
def test_round_trip_property(X, scaling):
    block = block_of(X.copy())
    try:
        params = fit_transform_block(block, scaling=scaling)
    except DegenerateVariableError:
        return
    back = inverse_transform(block.values, params)
    assert np.all(np.abs(back - X) <= 1e-12 * max(1.0, np.max(np.abs(X))))


def test_transform_params_row_scales():
    p = TransformParams(np.zeros(4), np.array([2.0, 3.0]), True, 2, 2)
    assert p.row_scales([0, 1, 2, 3]).tolist() == [2.0, 2.0, 3.0, 3.0]


def test_snapshot_scaler_estimator(rng):
    X = rng.standard_normal((8, 6))  # 8 snapshots, 6 local features
    sc = SnapshotScaler(scaling=True, n_vars=2).fit(X)
    Z = sc.transform(X)
    assert np.allclose(Z.mean(axis=0), 0, atol=1e-15)
    assert np.max(np.abs(Z)) <= 1 + 1e-15
    assert np.allclose(sc.inverse_transform(Z), X, rtol=1e-12, atol=1e-14)
    assert sc.get_params()["scaling"] is True
    with pytest.raises(ValueError):
        SnapshotScaler(n_vars=4).fit(X)
