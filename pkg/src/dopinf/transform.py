"""Centering and scaling of row-partitioned snapshot data.

Centering subtracts each row's temporal mean and needs no communication.
Scaling divides each variable by its global maximum absolute centered value,
found with one MAX reduction, so scaled entries lie in ``[-1, 1]``.
"""

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_snapshots
from .comm import ReduceOp, SerialComm
from .data import LocalBlock
from .errors import DegenerateVariableError

__all__ = [
    "TransformParams",
    "center_in_place",
    "compute_global_scales",
    "fit_transform_block",
    "forward_transform",
    "inverse_transform",
    "SnapshotScaler",
]


@dataclass
class TransformParams:
    """Shift and scale parameters of one rank.

    Attributes
    ----------
    local_means : ndarray, shape (n_vars * nx_local,)
        Temporal mean of every local row before centering.
    scales : ndarray, shape (n_vars,) or None
        Global scaling parameter per variable (identical on all ranks), or
        ``None`` when scaling is disabled.
    scaling_enabled : bool
    n_vars : int
    nx_local : int
    """

    local_means: np.ndarray
    scales: np.ndarray
    scaling_enabled: bool
    n_vars: int
    nx_local: int

    def row_scales(self, rows):
        rows = np.asarray(rows)
        if not self.scaling_enabled:
            return np.ones(rows.shape, dtype=np.float64)
        return self.scales[rows // self.nx_local]


def center_in_place(block):
    """Subtract the temporal mean from every row of ``block.values``.

    Returns
    -------
    block : LocalBlock
        The same object, now centered.
    means : ndarray
        Per-row means that were removed.
    """
    means = np.mean(block.values, axis=1)
    block.values -= means[:, np.newaxis]
    return block, means


def _variable_rows(n_vars, nx_local, j):
    return slice(j * nx_local, (j + 1) * nx_local)


def compute_global_scales(values, n_vars, comm=None, var_names=None):
    """Global max-abs value of each variable of a centered block.

    Parameters
    ----------
    values : ndarray, shape (n_vars * nx_local, nt)
        Centered local rows.
    n_vars : int
    comm : Communicator, optional
    var_names : sequence of str, optional
        Used only in error messages.

    Returns
    -------
    ndarray, shape (n_vars,)
        ``max(|global min|, |global max|)`` per variable, identical on every
        rank.

    Raises
    ------
    DegenerateVariableError
        If some variable is identically zero after centering.
    """
    comm = comm or SerialComm()
    nx_local = values.shape[0] // n_vars
    local = np.empty(n_vars)
    for j in range(n_vars):
        v = values[_variable_rows(n_vars, nx_local, j)]
        local[j] = np.maximum(np.abs(np.min(v)), np.abs(np.max(v)))
    scales = comm.allreduce(local, ReduceOp.MAX)
    for j in range(n_vars):
        if not scales[j] > 0:
            raise DegenerateVariableError(
                j, None if var_names is None else var_names[j])
    return scales


def fit_transform_block(block, comm=None, scaling=False, var_names=None):
    """Center (and optionally scale) ``block`` in place.

    Returns the :class:`TransformParams` needed to undo the transformation.
    """
    block, means = center_in_place(block)
    scales = None
    if scaling:
        scales = compute_global_scales(block.values, block.n_vars, comm,
                                       var_names)
        nx_local = block.nx_local
        for j in range(block.n_vars):
            block.values[_variable_rows(block.n_vars, nx_local, j)] /= scales[j]
    return TransformParams(local_means=means, scales=scales,
                           scaling_enabled=bool(scaling),
                           n_vars=block.n_vars, nx_local=block.nx_local)


def _resolve_rows(values, params, rows):
    n_local = params.local_means.shape[0]
    if rows is None:
        rows = np.arange(n_local)
    rows = np.atleast_1d(np.asarray(rows, dtype=np.intp))
    if rows.size and (rows.min() < 0 or rows.max() >= n_local):
        raise IndexError(f"row index outside local range [0, {n_local})")
    values = np.asarray(values, dtype=np.float64)
    squeeze = values.ndim == 1
    if squeeze:
        values = values.reshape(1, -1) if rows.size == 1 else values[:, None]
    if values.shape[0] != rows.size:
        raise ValueError(
            f"{values.shape[0]} value rows for {rows.size} row indices")
    return values, rows, squeeze


def forward_transform(values, params, rows=None):
    """Apply the fitted centering/scaling to rows in original coordinates."""
    values, rows, squeeze = _resolve_rows(values, params, rows)
    out = (values - params.local_means[rows][:, None]) \
        / params.row_scales(rows)[:, None]
    return out.ravel() if squeeze else out


def inverse_transform(values, params, rows=None):
    """Map transformed rows back to original coordinates.

    ``x -> x * scale[var(row)] + mean[row]`` (scale omitted when scaling is
    off). ``rows`` gives the local row index of each row of ``values``;
    ``None`` means all local rows in order.
    """
    values, rows, squeeze = _resolve_rows(values, params, rows)
    out = values * params.row_scales(rows)[:, None] \
        + params.local_means[rows][:, None]
    return out.ravel() if squeeze else out


class SnapshotScaler(TransformerMixin, BaseEstimator):
    """Per-feature temporal centering with optional per-variable max-abs
    scaling, for row-partitioned snapshot data.

    Follows the scikit-learn convention: ``X`` has shape
    ``(n_snapshots, n_local_features)``, i.e. it is the *transpose* of a
    rank's snapshot block. Local features are ordered variable-major
    (``n_vars`` contiguous groups of equal size).

    Parameters
    ----------
    scaling : bool, default=False
        Divide each centered variable by its global max-abs value.
    n_vars : int, default=1
        Number of state variables stacked in the feature axis.
    comm : Communicator, optional
        Communicator over which the scaling reduction runs. ``None`` means
        a single rank.

    Attributes
    ----------
    mean_ : ndarray, shape (n_local_features,)
    scale_ : ndarray, shape (n_vars,) or None
    params_ : TransformParams
    """

    def __init__(self, scaling=False, n_vars=1, comm=None):
        self.scaling = scaling
        self.n_vars = n_vars
        self.comm = comm

    def fit(self, X, y=None):
        X = check_snapshots(X, min_samples=2)
        if X.shape[1] % self.n_vars:
            raise ValueError(
                f"{X.shape[1]} features cannot be split into "
                f"{self.n_vars} variables")
        block = LocalBlock(rank=0, row_range=(0, X.shape[1] // self.n_vars),
                           n_vars=self.n_vars, values=X.T.copy())
        self.params_ = fit_transform_block(block, self.comm, self.scaling)
        self.mean_ = self.params_.local_means
        self.scale_ = self.params_.scales
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "params_")
        X = check_snapshots(X, n_features=self.n_features_in_)
        return forward_transform(X.T, self.params_).T

    def inverse_transform(self, X):
        check_is_fitted(self, "params_")
        X = check_snapshots(X, n_features=self.n_features_in_)
        return inverse_transform(X.T, self.params_).T
