"""Snapshot container format, row partitioning and per-rank block loading.

SNP1 layout (all integers little-endian)::

    b"SNP1"
    u64 n_vars, u64 nx, u64 nt
    n_vars x (u32 byte length, UTF-8 name)
    n_vars x (nx x nt float64 matrix, row-major)

Each spatial degree of freedom stores its time series contiguously, so the
rows ``[start, end)`` of one variable occupy a single byte range and a rank
reads only the bytes it owns.
"""

import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, PartitionError

__all__ = [
    "MAGIC",
    "SnapshotHeader",
    "PartitionPlan",
    "LocalBlock",
    "partition_rows",
    "write_snapshots",
    "read_header",
    "read_block",
    "read_rows",
    "load_block",
]

MAGIC = b"SNP1"
_DTYPE = np.dtype("<f8")


@dataclass(frozen=True)
class SnapshotHeader:
    n_vars: int
    nx: int
    nt: int
    var_names: tuple
    # Byte offset of the first matrix; filled in by read_header.
    data_offset: int = field(default=0, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "var_names", tuple(self.var_names))
        if self.n_vars < 1 or self.nx < 1:
            raise ValueError("n_vars and nx must be >= 1")
        if self.nt < 2:
            raise ValueError(f"nt must be >= 2, got {self.nt}")
        if len(self.var_names) != self.n_vars:
            raise ValueError(
                f"{len(self.var_names)} names given for {self.n_vars} variables")
        if any(not name for name in self.var_names):
            raise ValueError("variable names must be nonempty")
        if len(set(self.var_names)) != self.n_vars:
            raise ValueError("variable names must be unique")

    @property
    def n(self):
        """Total state dimension ``n_vars * nx``."""
        return self.n_vars * self.nx

    def matrix_offset(self, var):
        return self.data_offset + var * self.nx * self.nt * _DTYPE.itemsize


@dataclass(frozen=True)
class PartitionPlan:
    """Contiguous half-open row intervals ``[start, end)`` over ``[0, nx)``,
    one per rank."""

    ranges: tuple

    def __post_init__(self):
        object.__setattr__(self, "ranges",
                           tuple((int(a), int(b)) for a, b in self.ranges))

    @property
    def size(self):
        return len(self.ranges)

    @property
    def nx(self):
        return self.ranges[-1][1]

    def local_nx(self, rank):
        start, end = self.ranges[rank]
        return end - start

    def owner(self, g):
        """Rank whose interval contains global spatial index ``g``."""
        for rank, (start, end) in enumerate(self.ranges):
            if start <= g < end:
                return rank
        raise IndexError(f"spatial index {g} outside [0, {self.nx})")


@dataclass
class LocalBlock:
    """One rank's row slice of the snapshot matrix.

    ``values`` has shape ``(n_vars * nx_i, nt)``; row ``j * nx_i + k`` holds
    variable ``j`` at global spatial index ``row_range[0] + k``.
    """

    rank: int
    row_range: tuple
    n_vars: int
    values: np.ndarray

    @property
    def nx_local(self):
        return self.row_range[1] - self.row_range[0]

    @property
    def nt(self):
        return self.values.shape[1]

    def local_row(self, var, g):
        """Local row index of (variable, global spatial index)."""
        start, end = self.row_range
        if not 0 <= var < self.n_vars:
            raise IndexError(f"variable {var} outside [0, {self.n_vars})")
        if not start <= g < end:
            raise IndexError(
                f"spatial index {g} not owned by rank {self.rank} "
                f"[{start}, {end})")
        return var * self.nx_local + (g - start)


def partition_rows(nx, p):
    """Split ``nx`` spatial rows into ``p`` contiguous intervals.

    Ranks ``0..p-2`` receive ``nx // p`` rows; the last rank also takes the
    remainder.
    """
    nx, p = int(nx), int(p)
    if p < 1 or p > nx:
        raise PartitionError(
            f"cannot partition {nx} rows over {p} ranks (need 1 <= p <= nx)")
    equal = nx // p
    ranges = []
    for rank in range(p):
        start = rank * equal
        end = (rank + 1) * equal
        if rank == p - 1 and end != nx:
            end += nx - p * equal
        ranges.append((start, end))
    return PartitionPlan(tuple(ranges))


def write_snapshots(path, header, matrices):
    """Write per-variable ``nx x nt`` matrices to an SNP1 file.

    Parameters
    ----------
    path : str or os.PathLike
    header : SnapshotHeader
    matrices : sequence of array_like
        One ``(nx, nt)`` matrix per variable, in header order.
    """
    if len(matrices) != header.n_vars:
        raise ValueError(
            f"expected {header.n_vars} matrices, got {len(matrices)}")
    arrays = []
    for j, m in enumerate(matrices):
        a = np.asarray(m, dtype=np.float64)
        if a.shape != (header.nx, header.nt):
            raise ValueError(
                f"matrix for {header.var_names[j]!r} has shape {a.shape}, "
                f"expected {(header.nx, header.nt)}")
        arrays.append(np.ascontiguousarray(a, dtype=_DTYPE))
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<QQQ", header.n_vars, header.nx, header.nt))
        for name in header.var_names:
            raw = name.encode("utf-8")
            f.write(struct.pack("<I", len(raw)))
            f.write(raw)
        for a in arrays:
            f.write(a.tobytes(order="C"))


def read_header(path):
    """Parse and validate the header of an SNP1 file.

    Raises
    ------
    FormatError
        Wrong magic, malformed header, or a payload shorter than the header
        promises (the message names the first truncated variable).
    """
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
        fixed = f.read(24)
        if len(fixed) != 24:
            raise FormatError(f"{path}: truncated header")
        n_vars, nx, nt = struct.unpack("<QQQ", fixed)
        names = []
        for j in range(n_vars):
            raw_len = f.read(4)
            if len(raw_len) != 4:
                raise FormatError(f"{path}: truncated name table at variable {j}")
            (length,) = struct.unpack("<I", raw_len)
            raw = f.read(length)
            if len(raw) != length:
                raise FormatError(f"{path}: truncated name of variable {j}")
            try:
                names.append(raw.decode("utf-8"))
            except UnicodeDecodeError as exc:
                raise FormatError(f"{path}: variable {j} name is not UTF-8") from exc
        offset = f.tell()
    try:
        header = SnapshotHeader(n_vars, nx, nt, tuple(names), data_offset=offset)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc

    size = os.path.getsize(path)
    per_var = nx * nt * _DTYPE.itemsize
    for j, name in enumerate(names):
        if size < offset + (j + 1) * per_var:
            raise FormatError(
                f"{path}: payload truncated in variable {j} ({name!r}); "
                f"file has {size} bytes, need {offset + n_vars * per_var}")
    return header


def read_rows(path, header, var, start, end):
    """Read rows ``[start, end)`` of one variable as an ``(end-start, nt)``
    array, touching only that byte range."""
    count = (end - start) * header.nt
    offset = header.matrix_offset(var) + start * header.nt * _DTYPE.itemsize
    rows = np.fromfile(path, dtype=_DTYPE, count=count, offset=offset)
    if rows.size != count:
        raise FormatError(
            f"{path}: short read in variable {var} rows [{start}, {end})")
    return rows.reshape(end - start, header.nt).astype(np.float64, copy=False)


def read_block(path, plan, rank, header=None):
    """Load rank ``rank``'s rows of every variable, stacked vertically.

    Raises
    ------
    PartitionError
        If ``plan`` does not cover exactly ``header.nx`` rows.
    """
    if header is None:
        header = read_header(path)
    if plan.nx != header.nx or plan.ranges[0][0] != 0:
        raise PartitionError(
            f"partition covers [{plan.ranges[0][0]}, {plan.nx}) but the file "
            f"has nx={header.nx}")
    if not 0 <= rank < plan.size:
        raise PartitionError(f"rank {rank} outside plan of size {plan.size}")
    start, end = plan.ranges[rank]
    nx_i = end - start
    values = np.empty((header.n_vars * nx_i, header.nt), dtype=np.float64)
    for j in range(header.n_vars):
        values[j * nx_i:(j + 1) * nx_i] = read_rows(path, header, j, start, end)
    return LocalBlock(rank=rank, row_range=(start, end), n_vars=header.n_vars,
                      values=values)


def load_block(path, comm):
    """Read the header and this rank's block under the default partition."""
    header = read_header(path)
    plan = partition_rows(header.nx, comm.size)
    return header, plan, read_block(path, plan, comm.rank, header)
