import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dopinf.data import (MAGIC, LocalBlock, PartitionPlan, SnapshotHeader,
                         load_block, partition_rows, read_block, read_header,
                         read_rows, write_snapshots)
from dopinf.errors import FormatError, PartitionError

from conftest import collective, write_matrix


def test_partition_even_split():
    assert partition_rows(8, 2).ranges == ((0, 4), (4, 8))


def test_partition_remainder_to_last_rank():
    assert partition_rows(10, 3).ranges == ((0, 3), (3, 6), (6, 10))


def test_partition_large_nx():
    plan = partition_rows(146339, 4)
    assert [plan.local_nx(i) for i in range(4)] == [36584, 36584, 36584, 36587]
    assert plan.ranges[-1][1] == 146339


@pytest.mark.parametrize("nx, p", [(3, 4), (5, 0), (1, -1)])
def test_partition_invalid(nx, p):
    with pytest.raises(PartitionError):
        partition_rows(nx, p)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 5000).flatmap(lambda nx: st.tuples(st.just(nx),
                                                         st.integers(1, nx))))
def test_partition_covers_and_is_regular(case):
    nx, p = case
    plan = partition_rows(nx, p)
    assert plan.size == p
    assert plan.ranges[0][0] == 0 and plan.ranges[-1][1] == nx
    for (a, b), (c, _) in zip(plan.ranges, plan.ranges[1:]):
        assert b == c and a <= b
    lengths = [b - a for a, b in plan.ranges]
    assert len(set(lengths[:-1])) <= 1
    assert sum(lengths) == nx
    assert all(plan.owner(a) == i for i, (a, b) in enumerate(plan.ranges)
               if b > a)


def test_header_round_trip(tmp_path):
    path = tmp_path / "a.snp"
    header = write_matrix(path, [np.zeros((3, 2)), np.ones((3, 2))],
                          ["ux", "uy"])
    assert read_header(path) == header


def test_single_variable_round_trip(tmp_path):
    path = tmp_path / "a.snp"
    M = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
    write_matrix(path, [M])
    block = read_block(path, partition_rows(3, 1), 0)
    assert np.array_equal(block.values, M)


def test_two_variables_stacked(tmp_path, rng):
    path = tmp_path / "a.snp"
    A, B = rng.standard_normal((2, 5, 4))
    write_matrix(path, [A, B])
    block = read_block(path, partition_rows(5, 1), 0)
    assert block.values.shape == (10, 4)
    assert np.array_equal(block.values, np.vstack([A, B]))


def test_file_layout_bytes(tmp_path):
    path = tmp_path / "a.snp"
    M = np.arange(6.0).reshape(3, 2)
    write_matrix(path, [M], ["u"])
    raw = path.read_bytes()
    assert raw[:4] == MAGIC == b"\x53\x4e\x50\x31"
    assert struct.unpack("<QQQ", raw[4:28]) == (1, 3, 2)
    assert struct.unpack("<I", raw[28:32]) == (1,)
    assert raw[32:33] == b"u"
    assert np.array_equal(np.frombuffer(raw[33:], "<f8"), M.ravel())


def test_bad_magic(tmp_path):
    path = tmp_path / "a.snp"
    write_matrix(path, [np.zeros((2, 2))])
    raw = bytearray(path.read_bytes())
    raw[:4] = b"XXXX"
    path.write_bytes(bytes(raw))
    with pytest.raises(FormatError, match="magic"):
        read_header(path)


def test_truncated_payload_names_variable(tmp_path):
    path = tmp_path / "a.snp"
    write_matrix(path, [np.zeros((4, 3)), np.zeros((4, 3))], ["rho", "vel"])
    raw = path.read_bytes()
    path.write_bytes(raw[:-8])
    with pytest.raises(FormatError, match="vel"):
        read_header(path)


def test_truncated_header(tmp_path):
    path = tmp_path / "a.snp"
    path.write_bytes(MAGIC + b"\x01\x00")
    with pytest.raises(FormatError):
        read_header(path)


def test_header_invariants():
    with pytest.raises(ValueError):
        SnapshotHeader(2, 3, 4, ("a", "a"))
    with pytest.raises(ValueError):
        SnapshotHeader(1, 3, 4, ("",))
    with pytest.raises(ValueError):
        SnapshotHeader(1, 3, 1, ("a",))
    assert SnapshotHeader(2, 3, 4, ("a", "b")).n == 6


def test_write_rejects_wrong_shape(tmp_path):
    header = SnapshotHeader(1, 3, 2, ("u",))
    with pytest.raises(ValueError):
        write_snapshots(tmp_path / "a.snp", header, [np.zeros((2, 3))])


def test_two_ranks_concatenate(tmp_path, rng):
    path = tmp_path / "a.snp"
    M = rng.standard_normal((4, 3))
    write_matrix(path, [M])
    plan = partition_rows(4, 2)
    blocks = [read_block(path, plan, i) for i in range(2)]
    assert np.array_equal(np.vstack([b.values for b in blocks]), M)


@pytest.mark.parametrize("p", [1, 2, 3, 5])
def test_reassembly_bit_exact(tmp_path, rng, p):
    path = tmp_path / "a.snp"
    A, B = rng.standard_normal((2, 50, 6))
    write_matrix(path, [A, B])
    plan = partition_rows(50, p)
    blocks = [read_block(path, plan, i) for i in range(p)]
    for j, ref in enumerate((A, B)):
        parts = [b.values[j * b.nx_local:(j + 1) * b.nx_local] for b in blocks]
        assert np.vstack(parts).tobytes() == ref.tobytes()


def test_plan_header_mismatch(tmp_path):
    path = tmp_path / "a.snp"
    write_matrix(path, [np.zeros((6, 2))])
    with pytest.raises(PartitionError):
        read_block(path, partition_rows(5, 1), 0)
    with pytest.raises(PartitionError):
        read_block(path, partition_rows(6, 2), 2)


def test_read_rows_slice(tmp_path, rng):
    path = tmp_path / "a.snp"
    A, B = rng.standard_normal((2, 7, 3))
    write_matrix(path, [A, B])
    assert np.array_equal(read_rows(path, read_header(path), 1, 2, 5), B[2:5])


def test_local_row_mapping(tmp_path, rng):
    path = tmp_path / "a.snp"
    A, B = rng.standard_normal((2, 10, 3))
    write_matrix(path, [A, B])
    plan = partition_rows(10, 3)
    block = read_block(path, plan, 2)
    assert block.row_range == (6, 10)
    assert np.array_equal(block.values[block.local_row(1, 7)], B[7])
    assert np.array_equal(block.values[block.local_row(0, 9)], A[9])
    with pytest.raises(IndexError):
        block.local_row(0, 5)


def test_load_block_collective(tmp_path, rng):
    path = tmp_path / "a.snp"
    A = rng.standard_normal((9, 4))
    write_matrix(path, [A])
    out = collective(lambda c: load_block(path, c)[2].values, 3)
    assert np.array_equal(np.vstack(out), A)


def test_plan_owner_out_of_range():
    with pytest.raises(IndexError):
        PartitionPlan(((0, 2), (2, 4))).owner(4)


def test_local_block_properties():
    b = LocalBlock(0, (3, 5), 2, np.zeros((4, 7)))
    assert b.nx_local == 2 and b.nt == 7
