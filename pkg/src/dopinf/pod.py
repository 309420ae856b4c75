"""Basis-free distributed POD through the method of snapshots.

Each rank forms the Gram summand ``Q_i^T Q_i`` of its row block; one SUM
reduction yields ``D = Q^T Q`` on every rank. All ranks then eigendecompose
``D`` redundantly, build ``Tr = U_r Lambda_r^{-1/2}`` and project
``Qhat = Tr^T D``. The POD basis itself is never assembled; its local rows
are ``Q_i Tr`` when needed.
"""

import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_snapshots
from .comm import ReduceOp, SerialComm
from .errors import NotPSDError, RankDeficiencyError

__all__ = [
    "CLAMP_RTOL",
    "DEFAULT_ENERGY",
    "EigenSpectrum",
    "local_gram",
    "global_gram",
    "eig_sym_desc",
    "select_rank",
    "retained_energy",
    "reduced_map",
    "project",
    "GramPOD",
]

#: Eigenvalues within ``CLAMP_RTOL * lambda_1`` of zero are round-off.
CLAMP_RTOL = 1e-10
DEFAULT_ENERGY = 0.9995


@dataclass
class EigenSpectrum:
    """Eigenpairs of the Gram matrix, eigenvalues in descending order.

    ``eigenvectors[:, k]`` pairs with ``eigenvalues[k]``.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def singular_values(self):
        return np.sqrt(self.eigenvalues)


def local_gram(values):
    """Gram summand ``Q_i^T Q_i`` of one ``(m_i, nt)`` block."""
    values = np.asarray(values, dtype=np.float64)
    return np.matmul(values.T, values)


def global_gram(local, comm=None):
    """Sum the Gram summands of all ranks (result on every rank)."""
    comm = comm or SerialComm()
    return comm.allreduce(local, ReduceOp.SUM)


def _fix_signs(vectors):
    # Largest-magnitude entry of every column made positive (first index on ties).
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def eig_sym_desc(D, clamp_rtol=CLAMP_RTOL):
    """Symmetric eigendecomposition with descending, clamped eigenvalues.

    Eigenvalues with magnitude at most ``clamp_rtol * lambda_1`` are set to
    exactly zero. Each eigenvector is oriented so its largest-magnitude entry
    is positive.

    Raises
    ------
    NotPSDError
        If an eigenvalue is below ``-clamp_rtol * lambda_1``.
    """
    D = np.asarray(D, dtype=np.float64)
    eigs, vecs = np.linalg.eigh(D)
    order = np.argsort(eigs, kind="stable")[::-1]
    eigs = eigs[order]
    vecs = vecs[:, order]

    tol = clamp_rtol * max(eigs[0], 0.0)
    if eigs[-1] < -tol:
        raise NotPSDError(
            f"Gram matrix eigenvalue {eigs[-1]:.3e} is below the round-off "
            f"floor {-tol:.3e}; the Gram data is corrupted")
    eigs = np.where(eigs <= tol, 0.0, eigs)
    return EigenSpectrum(eigenvalues=eigs, eigenvectors=_fix_signs(vecs))


def select_rank(eigenvalues, threshold=DEFAULT_ENERGY):
    """Smallest ``r`` whose retained energy strictly exceeds ``threshold``.

    Retained energy is ``cumsum(lambda)[r-1] / sum(lambda)``. If no ``r``
    exceeds the threshold (possible only for ``threshold >= 1``), ``nt`` is
    returned with a warning.
    """
    eigenvalues = np.asarray(eigenvalues, dtype=np.float64)
    if not 0 < threshold <= 1:
        raise ValueError(f"energy threshold must lie in (0, 1], got {threshold}")
    total = np.sum(eigenvalues)
    if not total > 0:
        raise ValueError("eigenvalues sum to zero; data has no energy")
    ret_energy = np.cumsum(eigenvalues) / total
    exceeds = ret_energy > threshold
    if not exceeds.any():
        warnings.warn(
            f"retained energy never exceeds {threshold}; using r = "
            f"{eigenvalues.size}", RuntimeWarning, stacklevel=2)
        return int(eigenvalues.size)
    return int(np.argmax(exceeds)) + 1


def retained_energy(eigenvalues, r):
    """Fraction of the total energy captured by the first ``r`` modes."""
    eigenvalues = np.asarray(eigenvalues, dtype=np.float64)
    if not 1 <= r <= eigenvalues.size:
        raise ValueError(f"r must lie in [1, {eigenvalues.size}], got {r}")
    return float(np.cumsum(eigenvalues)[r - 1] / np.sum(eigenvalues))


def reduced_map(spectrum, r):
    """``Tr = U_r Lambda_r^{-1/2}``, shape ``(nt, r)``.

    Raises
    ------
    RankDeficiencyError
        If ``lambda_r`` is zero, i.e. ``r`` exceeds the numerical rank.
    """
    lam = spectrum.eigenvalues
    if not 1 <= r <= lam.size:
        raise ValueError(f"r must lie in [1, {lam.size}], got {r}")
    if not lam[r - 1] > 0:
        numerical_rank = int(np.count_nonzero(lam > 0))
        raise RankDeficiencyError(
            f"r = {r} exceeds the numerical rank {numerical_rank} of the "
            "snapshot data")
    return spectrum.eigenvectors[:, :r] * lam[:r] ** -0.5


def project(Tr, D):
    """Reduced trajectory ``Qhat = Tr^T D``, shape ``(r, nt)``."""
    return np.matmul(Tr.T, D)


class GramPOD(TransformerMixin, BaseEstimator):
    """Distributed POD of row-partitioned snapshots without forming the basis.

    ``X`` follows the scikit-learn convention ``(n_snapshots,
    n_local_features)``: it is the transpose of this rank's (already
    transformed) snapshot block. Every rank of ``comm`` must call
    :meth:`fit` and :meth:`transform` collectively.

    Parameters
    ----------
    energy : float, default=0.9995
        Retained-energy threshold used when ``n_components`` is None.
    n_components : int, optional
        Prescribed reduced dimension ``r``.
    comm : Communicator, optional

    Attributes
    ----------
    gram_ : ndarray, shape (nt, nt)
        Global Gram matrix.
    eigenvalues_ : ndarray, shape (nt,)
    eigenvectors_ : ndarray, shape (nt, nt)
    n_components_ : int
    retained_energy_ : float
    reduced_map_ : ndarray, shape (nt, n_components_)
    components_ : ndarray, shape (n_components_, n_local_features)
        Local rows of the POD basis, transposed.
    reduced_trajectory_ : ndarray, shape (nt, n_components_)
        Projected training snapshots, one per row.
    """

    def __init__(self, energy=DEFAULT_ENERGY, n_components=None, comm=None):
        self.energy = energy
        self.n_components = n_components
        self.comm = comm

    def fit(self, X, y=None):
        X = check_snapshots(X, min_samples=2)
        D = global_gram(local_gram(X.T), self.comm)
        spectrum = eig_sym_desc(D)
        if self.n_components is None:
            r = select_rank(spectrum.eigenvalues, self.energy)
        else:
            r = int(self.n_components)
        Tr = reduced_map(spectrum, r)

        self.gram_ = D
        self.eigenvalues_ = spectrum.eigenvalues
        self.eigenvectors_ = spectrum.eigenvectors
        self.n_components_ = r
        self.retained_energy_ = retained_energy(spectrum.eigenvalues, r)
        self.reduced_map_ = Tr
        self.reduced_trajectory_ = project(Tr, D).T
        self.components_ = np.matmul(X.T, Tr).T
        self.n_features_in_ = X.shape[1]
        return self

    def fit_transform(self, X, y=None):
        return self.fit(X).reduced_trajectory_

    def transform(self, X):
        """Project snapshots onto the POD basis (collective)."""
        check_is_fitted(self, "components_")
        X = check_snapshots(X, n_features=self.n_features_in_)
        comm = self.comm or SerialComm()
        return comm.allreduce(np.matmul(X, self.components_.T), ReduceOp.SUM)

    def inverse_transform(self, Z):
        """Lift reduced states to this rank's local features (no
        communication)."""
        check_is_fitted(self, "components_")
        Z = np.atleast_2d(np.asarray(Z, dtype=np.float64))
        return np.matmul(Z, self.components_)
