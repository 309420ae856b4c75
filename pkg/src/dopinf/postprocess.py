"""Mapping reduced solutions back to the original coordinates.

After the optimal reduced trajectory ``Qtilde`` is broadcast, every rank
forms the rows of the POD basis it needs as ``Q_i Tr`` and lifts
``Qtilde`` locally; none of this communicates.

Products here use ``einsum`` rather than BLAS: its per-entry summation order
does not depend on how many rows are processed at once (operands are made
C-contiguous first, since the kernel choice depends on layout), so a probe
series is bit-identical to the matching row of the full field.
"""

from dataclasses import dataclass

import numpy as np

from .data import SnapshotHeader, write_snapshots
from .transform import inverse_transform

__all__ = [
    "ProbeSet",
    "ProbeSeries",
    "basis_rows",
    "lift",
    "reconstruct_probes",
    "reconstruct_field",
    "relative_error",
    "write_local_field",
]


@dataclass(frozen=True)
class ProbeSet:
    """Probe locations as ``(variable index, global spatial index)`` pairs.

    Duplicates are allowed and each produces its own series.
    """

    entries: tuple

    def __post_init__(self):
        object.__setattr__(self, "entries",
                           tuple((int(j), int(g)) for j, g in self.entries))

    def validate(self, n_vars, nx):
        for j, g in self.entries:
            if not 0 <= j < n_vars:
                raise ValueError(f"probe variable {j} outside [0, {n_vars})")
            if not 0 <= g < nx:
                raise ValueError(f"probe index {g} outside [0, {nx})")
        return self

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)


@dataclass
class ProbeSeries:
    position: int
    var: int
    index: int
    values: np.ndarray


def basis_rows(values, Tr, local_rows=None):
    """Rows of the POD basis: ``values[rows] @ Tr``.

    ``values`` must be the same transformed ``(m_i, nt)`` block that entered
    the Gram matrix.
    """
    values = np.asarray(values, dtype=np.float64)
    if local_rows is not None:
        rows = np.atleast_1d(np.asarray(local_rows, dtype=np.intp))
        if rows.size and (rows.min() < 0 or rows.max() >= values.shape[0]):
            raise IndexError(
                f"row index outside local range [0, {values.shape[0]})")
        values = values[rows]
    return np.einsum("it,tr->ir", np.ascontiguousarray(values),
                     np.ascontiguousarray(Tr, dtype=np.float64))


def lift(phi, Qtilde):
    """Transformed-coordinate series ``phi @ Qtilde.T`` for basis rows
    ``phi`` (len x r) and a reduced solution ``Qtilde`` (nt_p x r)."""
    return np.einsum("ir,kr->ik", np.ascontiguousarray(phi),
                     np.ascontiguousarray(Qtilde, dtype=np.float64))


def reconstruct_probes(block, Tr, Qtilde, probes, params):
    """Original-coordinate time series at the probes owned by this rank.

    Parameters
    ----------
    block : LocalBlock
        Transformed block used to build the Gram matrix.
    Tr : ndarray, shape (nt, r)
    Qtilde : ndarray, shape (nt_p, r)
        Reduced solution, time along rows.
    probes : ProbeSet
    params : TransformParams

    Returns
    -------
    list of ProbeSeries
        One entry per owned probe, in probe-set order; empty if the rank
        owns none.
    """
    start, end = block.row_range
    out = []
    for position, (j, g) in enumerate(probes):
        if not start <= g < end:
            continue
        row = block.local_row(j, g)
        phi = basis_rows(block.values, Tr, [row])
        series = inverse_transform(lift(phi, Qtilde), params, [row])[0]
        out.append(ProbeSeries(position, j, g, series))
    return out


def reconstruct_field(block, Tr, Qtilde, params):
    """Full local approximation ``V_{r,i} Qtilde^T`` in original
    coordinates, shape ``(m_i, nt_p)``."""
    V_local = basis_rows(block.values, Tr)
    return inverse_transform(lift(V_local, Qtilde), params)


def relative_error(reference, approx):
    """``||reference - approx||_F / ||reference||_F``."""
    reference = np.asarray(reference, dtype=np.float64)
    approx = np.asarray(approx, dtype=np.float64)
    if reference.shape != approx.shape:
        raise ValueError(f"shape mismatch {reference.shape} vs {approx.shape}")
    norm = np.linalg.norm(reference)
    if norm == 0:
        raise ValueError("reference has zero norm")
    return float(np.linalg.norm(reference - approx) / norm)


def write_local_field(path, field, var_names):
    """Write a rank's reconstructed rows ``(n_vars * nx_i, nt_p)`` as an SNP1
    file over its own spatial range."""
    n_vars = len(var_names)
    nx_i = field.shape[0] // n_vars
    header = SnapshotHeader(n_vars, nx_i, field.shape[1], tuple(var_names))
    write_snapshots(path, header,
                    [field[j * nx_i:(j + 1) * nx_i] for j in range(n_vars)])
