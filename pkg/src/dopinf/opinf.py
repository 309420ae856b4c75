"""Discrete quadratic Operator Inference.

Learns ``A``, ``F``, ``c`` of the reduced map

    q[k+1] = A q[k] + F quad(q[k]) + c

from a reduced trajectory by Tikhonov-regularized least squares, solved
through the normal equations. ``quad`` returns the ``r(r+1)/2`` distinct
products ``q_i q_j`` (``j >= i``) with no symmetrization factor, so ``F``
absorbs the coefficients of both orderings.
"""

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as la
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_positive, check_trajectory
from .errors import OpInfSolveError

__all__ = [
    "n_quadratic",
    "quad_nonredundant",
    "ReducedOperators",
    "OpInfData",
    "RegPair",
    "assemble_data",
    "build_regularizer",
    "normal_equations",
    "solve_opinf",
    "DiscreteQuadraticOpInf",
]


def n_quadratic(r):
    return r * (r + 1) // 2


def quad_nonredundant(q):
    """Distinct quadratic products of ``q``.

    For a vector of length ``r`` the output concatenates ``q[i] * q[i:]``
    for ``i = 0..r-1``; for a ``(K, r)`` matrix the same is done row-wise,
    giving ``(K, r(r+1)/2)``.
    """
    q = np.asarray(q, dtype=np.float64)
    if q.ndim == 1:
        return np.concatenate([q[i] * q[i:] for i in range(q.size)])
    if q.ndim == 2:
        r = q.shape[1]
        return np.concatenate([q[:, i:i + 1] * q[:, i:] for i in range(r)],
                              axis=1)
    raise ValueError(f"expected a vector or a matrix, got ndim={q.ndim}")


@dataclass
class ReducedOperators:
    """Operators of the discrete quadratic reduced model.

    Attributes
    ----------
    A : ndarray, shape (r, r)
    F : ndarray, shape (r, r(r+1)/2)
    c : ndarray, shape (r,)
    """

    A: np.ndarray
    F: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        r = self.A.shape[0]
        if self.A.shape != (r, r) or self.F.shape != (r, n_quadratic(r)) \
                or self.c.shape != (r,):
            raise ValueError(
                f"inconsistent operator shapes A{self.A.shape}, "
                f"F{self.F.shape}, c{self.c.shape}")

    @property
    def r(self):
        return self.A.shape[0]

    @property
    def s(self):
        return self.F.shape[1]

    @property
    def Ohat(self):
        """Stacked ``[A | F | c]``, shape ``(r, r + s + 1)``."""
        return np.hstack([self.A, self.F, self.c[:, None]])

    @classmethod
    def from_Ohat(cls, Ohat, r):
        s = n_quadratic(r)
        return cls(A=Ohat[:, :r].copy(), F=Ohat[:, r:r + s].copy(),
                   c=Ohat[:, r + s].copy())

    def apply(self, q):
        """One step of the map for a state vector (or row-wise for a
        ``(K, r)`` matrix of states)."""
        q = np.asarray(q, dtype=np.float64)
        if q.ndim == 1:
            return self.A @ q + self.F @ quad_nonredundant(q) + self.c
        return q @ self.A.T + quad_nonredundant(q) @ self.F.T + self.c


@dataclass(frozen=True)
class RegPair:
    """Regularization pair: ``beta1`` penalizes ``A`` and ``c``, ``beta2``
    penalizes ``F``."""

    beta1: float
    beta2: float

    def __post_init__(self):
        object.__setattr__(self, "beta1", check_positive("beta1", self.beta1))
        object.__setattr__(self, "beta2", check_positive("beta2", self.beta2))

    def __iter__(self):
        return iter((self.beta1, self.beta2))


@dataclass
class OpInfData:
    """Least-squares data for the shift-by-one problem.

    ``Dhat`` rows are ``[q_k | quad(q_k) | 1]`` for ``k = 0..nt-2``;
    ``Qhat2T`` row ``k`` is ``q_{k+1}``.
    """

    Dhat: np.ndarray
    Qhat2T: np.ndarray
    r: int

    @property
    def s(self):
        return n_quadratic(self.r)

    @property
    def d(self):
        return self.r + self.s + 1

    @property
    def K(self):
        return self.Dhat.shape[0]


def assemble_data(Qhat):
    """Build the OpInf data matrix from a reduced trajectory.

    Parameters
    ----------
    Qhat : ndarray, shape (r, nt)
        Reduced snapshots as columns.
    """
    Qhat = np.asarray(Qhat, dtype=np.float64)
    if Qhat.ndim != 2:
        raise ValueError("Qhat must be a 2-D (r, nt) array")
    r, nt = Qhat.shape
    if nt < 2:
        raise ValueError(f"need at least 2 reduced snapshots, got {nt}")
    Q1 = Qhat.T[:-1, :]
    Q2 = Qhat.T[1:, :]
    K = Q1.shape[0]
    Dhat = np.concatenate((Q1, quad_nonredundant(Q1), np.ones((K, 1))),
                          axis=1)
    data = OpInfData(Dhat=Dhat, Qhat2T=np.ascontiguousarray(Q2), r=r)
    if K < data.d:
        warnings.warn(
            f"OpInf problem is underdetermined ({K} equations for {data.d} "
            "unknowns per mode); regularization required",
            RuntimeWarning, stacklevel=2)
    return data


def build_regularizer(r, s, beta1, beta2=None):
    """Diagonal of the Tikhonov matrix: ``beta1`` on the linear and constant
    columns, ``beta2`` on the quadratic columns.

    ``beta1`` may also be a :class:`RegPair` (with ``beta2`` omitted).
    """
    if isinstance(beta1, RegPair):
        beta1, beta2 = beta1
    beta1 = check_positive("beta1", beta1)
    beta2 = check_positive("beta2", beta2)
    gamma = np.empty(r + s + 1)
    gamma[:r] = beta1
    gamma[r:r + s] = beta2
    gamma[r + s:] = beta1
    return gamma


def normal_equations(data):
    """``(Dhat^T Dhat, Dhat^T Qhat2T)``; reusable across regularizers."""
    return data.Dhat.T @ data.Dhat, data.Dhat.T @ data.Qhat2T


def solve_opinf(data, gamma, normal=None):
    """Solve ``(Dhat^T Dhat + diag(gamma)) Ohat^T = Dhat^T Qhat2T``.

    A Cholesky factorization is used; if round-off makes the regularized
    matrix numerically indefinite, an LU solve is used instead.

    Parameters
    ----------
    data : OpInfData
    gamma : ndarray, shape (d,)
        Regularizer diagonal from :func:`build_regularizer`.
    normal : tuple, optional
        Precomputed :func:`normal_equations` output.

    Raises
    ------
    OpInfSolveError
        If both factorizations fail or the solution is not finite.
    """
    DtD, rhs = normal_equations(data) if normal is None else normal
    gamma = np.asarray(gamma, dtype=np.float64)
    if gamma.shape != (data.d,):
        raise ValueError(f"regularizer must have length {data.d}")
    lhs = DtD + np.diag(gamma)
    if not (np.all(np.isfinite(lhs)) and np.all(np.isfinite(rhs))):
        raise OpInfSolveError("OpInf data contains non-finite entries")
    try:
        OhatT = la.cho_solve(la.cho_factor(lhs, lower=False), rhs)
    except la.LinAlgError:
        try:
            OhatT = la.solve(lhs, rhs)
        except la.LinAlgError as exc:
            raise OpInfSolveError(f"regularized normal equations are singular: {exc}") from exc
    if not np.all(np.isfinite(OhatT)):
        raise OpInfSolveError("OpInf solution is not finite")
    return ReducedOperators.from_Ohat(OhatT.T, data.r)


class DiscreteQuadraticOpInf(RegressorMixin, BaseEstimator):
    """Regularized discrete quadratic Operator Inference for one
    ``(beta1, beta2)`` pair.

    Parameters
    ----------
    beta1 : float, default=1e-8
        Penalty on the linear and constant operators.
    beta2 : float, default=1e-2
        Penalty on the quadratic operator.

    Attributes
    ----------
    operators_ : ReducedOperators
    n_components_ : int
        Reduced dimension ``r``.
    """

    def __init__(self, beta1=1e-8, beta2=1e-2):
        self.beta1 = beta1
        self.beta2 = beta2

    def fit(self, X, y=None):
        """Learn operators from a reduced trajectory.

        Parameters
        ----------
        X : array_like, shape (nt, r)
            Reduced states, one time step per row. If ``y`` is None,
            consecutive rows are paired (row ``k`` -> row ``k+1``).
        y : array_like, shape (nt, r), optional
            Explicit next states for each row of ``X``.
        """
        X = check_trajectory(X, min_steps=1 if y is not None else 2)
        if y is None:
            data = assemble_data(X.T)
        else:
            y = check_trajectory(y, min_steps=1)
            if y.shape != X.shape:
                raise ValueError("X and y must have the same shape")
            K = X.shape[0]
            data = OpInfData(
                Dhat=np.concatenate((X, quad_nonredundant(X), np.ones((K, 1))),
                                    axis=1),
                Qhat2T=y, r=X.shape[1])
        gamma = build_regularizer(data.r, data.s, self.beta1, self.beta2)
        self.operators_ = solve_opinf(data, gamma)
        self.n_components_ = data.r
        self.n_features_in_ = data.r
        return self

    def predict(self, X):
        """Apply the learned one-step map to each row of ``X``."""
        check_is_fitted(self, "operators_")
        X = check_trajectory(X, min_steps=1)
        return self.operators_.apply(X)

    def simulate(self, q0, n_steps):
        """Iterate the map from ``q0``; returns ``(finite, trajectory)``."""
        from .rom_search import integrate

        check_is_fitted(self, "operators_")
        return integrate(self.operators_, q0, n_steps)
