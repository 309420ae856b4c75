import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dopinf.comm import ReduceOp, SerialComm, run_inprocess
from dopinf.errors import CollectiveError

from conftest import collective


def test_sum_of_scalars_three_ranks():
    out = collective(lambda c: c.allreduce([c.rank + 1.0], ReduceOp.SUM), 3)
    assert [o.tolist() for o in out] == [[6.0]] * 3


def test_max_two_ranks():
    vals = [3.0, 5.0]
    out = collective(lambda c: c.allreduce([vals[c.rank]], ReduceOp.MAX), 2)
    assert [o.tolist() for o in out] == [[5.0], [5.0]]


def test_single_rank_sum_is_identity(rng):
    D0 = rng.standard_normal((4, 4))
    out = collective(lambda c: c.allreduce(D0, ReduceOp.SUM), 1)[0]
    assert np.array_equal(out, D0)
    assert np.array_equal(SerialComm().allreduce(D0), D0)


def test_broadcast_single_rank():
    X = np.arange(5.0)
    assert np.array_equal(SerialComm().broadcast_from(0, X), X)
    out = collective(lambda c: c.broadcast_from(0, X), 1)[0]
    assert np.array_equal(out, X)


def test_broadcast_from_rank_two_of_four():
    def fn(c):
        payload = np.array([1.0, 2.0, 3.0]) if c.rank == 2 else None
        return c.broadcast_from(2, payload)

    for out in collective(fn, 4):
        assert out.tolist() == [1.0, 2.0, 3.0]


def test_broadcast_trajectory_matrix(rng):
    traj = rng.standard_normal((50, 4))

    def fn(c):
        return c.broadcast_from(1, traj if c.rank == 1 else None)

    out = collective(fn, 2)
    assert np.array_equal(out[0], traj)
    assert out[0] is not traj


def test_broadcast_owner_out_of_range():
    with pytest.raises(CollectiveError):
        SerialComm().broadcast_from(1, [1.0])
    with pytest.raises(CollectiveError):
        collective(lambda c: c.broadcast_from(-1, [1.0]), 2)


def test_barrier_returns():
    SerialComm().barrier()
    assert collective(lambda c: c.barrier() or c.rank, 4) == [0, 1, 2, 3]


def test_missing_barrier_times_out():
    def fn(c):
        if c.rank != 0:
            c.barrier()

    t0 = time.perf_counter()
    with pytest.raises(CollectiveError):
        run_inprocess(fn, 3, timeout=0.5)
    assert time.perf_counter() - t0 < 10


def test_shape_mismatch_is_collective_error():
    with pytest.raises(CollectiveError):
        collective(lambda c: c.allreduce(np.zeros(c.rank + 1)), 2)


def test_error_is_rank_tagged():
    def fn(c):
        if c.rank == 2:
            raise RuntimeError("boom")
        c.barrier()

    with pytest.raises(RuntimeError) as info:
        run_inprocess(fn, 4, timeout=5)
    assert info.value.rank == 2


def test_unknown_reduction():
    with pytest.raises(ValueError):
        collective(lambda c: c.allreduce([1.0], "sum"), 2)


def test_allgather_order():
    assert collective(lambda c: c.allgather(c.rank * 10), 3)[1] == [0, 10, 20]


def test_sum_is_ascending_rank_order():
    # Ascending order reproduces a left-to-right float sum exactly.
    vals = [1e16, 1.0, -1e16, 1.0]
    out = collective(lambda c: c.allreduce([vals[c.rank]]), 4)[0][0]
    expected = ((vals[0] + vals[1]) + vals[2]) + vals[3]
    assert out == expected


def test_inprocess_comm_repr():
    assert "rank" in repr(SerialComm())


payloads = st.integers(1, 5).flatmap(
    lambda p: st.tuples(st.just(p), arrays(
        np.float64, (p, 3), elements=st.floats(-1e6, 1e6))))


@settings(max_examples=25, deadline=None)
@given(payloads)
def test_min_max_return_some_rank_value(case):
    p, X = case
    for op, ref in ((ReduceOp.MIN, X.min(axis=0)), (ReduceOp.MAX, X.max(axis=0))):
        outs = collective(lambda c: c.allreduce(X[c.rank], op), p)
        for out in outs:
            assert np.array_equal(out, ref)
            assert all(np.any(X[:, k] == out[k]) for k in range(3))


@settings(max_examples=25, deadline=None)
@given(payloads)
def test_broadcast_bitwise_equal(case):
    p, X = case
    owner = p - 1
    outs = collective(
        lambda c: c.broadcast_from(owner, X if c.rank == owner else None), p)
    for out in outs:
        assert out.tobytes() == X.tobytes()


@settings(max_examples=20, deadline=None)
@given(arrays(np.float64, (2, 3), elements=st.floats(-1e6, 1e6)))
def test_single_rank_sum_identity_property(X):
    out = collective(lambda c: c.allreduce(X), 1)[0]
    assert np.array_equal(out, X)
