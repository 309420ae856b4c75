"""Time integration of learned reduced models and the distributed search
for the regularization pair.

Candidate pairs from ``B1 x B2`` (``B1``-major) are split across ranks.
Each rank learns, integrates and scores its candidates; the admissible
candidate with the smallest training error wins globally (one MIN
reduction), and the owning rank broadcasts its trajectory and operators.
A candidate is admissible when its trajectory stays finite and its
deviation from the training mean grows by less than ``max_growth``
relative to the training data.
"""

import time
from dataclasses import dataclass, field
from itertools import product

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_positive, check_positive_grid, check_trajectory
from .comm import ReduceOp, SerialComm
from .errors import NoAdmissiblePairError, OpInfSolveError
from .opinf import (DiscreteQuadraticOpInf, ReducedOperators, RegPair,
                    assemble_data, build_regularizer, normal_equations,
                    solve_opinf)

__all__ = [
    "DEFAULT_B1",
    "DEFAULT_B2",
    "DEFAULT_MAX_GROWTH",
    "rom_step",
    "integrate",
    "training_error",
    "growth_ratio",
    "distribute_pairs",
    "SearchConfig",
    "TrialResult",
    "SearchOutcome",
    "evaluate_pair",
    "grid_search",
    "OpInfGridSearch",
]

DEFAULT_B1 = np.logspace(-10.0, 0.0, num=8)
DEFAULT_B2 = np.logspace(-4.0, 4.0, num=8)
DEFAULT_MAX_GROWTH = 1.2


def rom_step(ops, q):
    """``A q + F quad(q) + c``."""
    return ops.apply(q)


def integrate(ops, qhat0, n_steps):
    """Iterate the reduced map for ``n_steps`` rows starting at ``qhat0``.

    Returns
    -------
    finite : bool
        False if any state became NaN or infinite.
    trajectory : ndarray, shape (n_steps, r)
        Row 0 is ``qhat0``. After the first non-finite state the remaining
        rows are NaN (iteration stops there).
    """
    n_steps = int(n_steps)
    if n_steps < 1:
        raise ValueError(f"n_steps must be >= 1, got {n_steps}")
    qhat0 = np.asarray(qhat0, dtype=np.float64)
    traj = np.empty((n_steps, qhat0.size))
    traj[0] = qhat0
    finite = bool(np.all(np.isfinite(qhat0)))
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(n_steps - 1):
            if not finite:
                traj[k + 1:] = np.nan
                break
            traj[k + 1] = ops.apply(traj[k])
            finite = bool(np.all(np.isfinite(traj[k + 1])))
    return finite, traj


def training_error(Qhat_ref, Qtilde_train):
    """Largest per-time-step relative error of the reduced solution.

    ``max_k ||Qtilde[k] - Qhat[k]|| / ||Qhat[k]||`` with time along rows.
    """
    Qhat_ref = np.asarray(Qhat_ref, dtype=np.float64)
    Qtilde_train = np.asarray(Qtilde_train, dtype=np.float64)
    if Qhat_ref.shape != Qtilde_train.shape:
        raise ValueError(
            f"shape mismatch {Qhat_ref.shape} vs {Qtilde_train.shape}")
    denom = np.sum(Qhat_ref ** 2, axis=1)
    if np.any(denom == 0):
        k = int(np.flatnonzero(denom == 0)[0])
        raise ValueError(f"reference reduced state at step {k} is zero")
    return float(np.max(np.sqrt(
        np.sum((Qtilde_train - Qhat_ref) ** 2, axis=1) / denom)))


def growth_ratio(Qtilde, Qhat_train):
    """Largest deviation of ``Qtilde`` from the training mean, relative to
    the largest deviation of the training data itself."""
    Qtilde = np.asarray(Qtilde, dtype=np.float64)
    Qhat_train = np.asarray(Qhat_train, dtype=np.float64)
    mean = np.mean(Qhat_train, axis=0)
    train_dev = np.max(np.abs(Qhat_train - mean), axis=0)
    if not np.max(train_dev) > 0:
        raise ValueError("training reduced data is constant in time")
    trial_dev = np.max(np.abs(Qtilde - mean), axis=0)
    return float(np.max(trial_dev) / np.max(train_dev))


def distribute_pairs(n_reg, rank, size):
    """Index interval ``[start, end)`` of the candidates handled by ``rank``.

    Every rank gets ``n_reg // size`` consecutive candidates and the last
    rank also takes the remainder. When there are fewer candidates than
    ranks, rank ``i < n_reg`` takes candidate ``i`` and the others none.
    """
    n_reg, rank, size = int(n_reg), int(rank), int(size)
    if n_reg < 1:
        raise ValueError("need at least one regularization pair")
    if not 0 <= rank < size:
        raise ValueError(f"rank {rank} outside [0, {size})")
    if size > n_reg:
        return (rank, rank + 1) if rank < n_reg else (n_reg, n_reg)
    equal = n_reg // size
    start = rank * equal
    end = (rank + 1) * equal
    if rank == size - 1 and end != n_reg:
        end += n_reg - size * equal
    return start, end


@dataclass
class SearchConfig:
    """Candidate grid and admissibility settings.

    Attributes
    ----------
    B1, B2 : ndarray
        Candidate ``beta1`` and ``beta2`` values.
    max_growth : float
        Candidates need a growth ratio strictly below this value.
    nt_p : int or None
        Number of time steps integrated per candidate (trial horizon);
        ``None`` uses the training length.
    """

    B1: np.ndarray = field(default_factory=lambda: DEFAULT_B1.copy())
    B2: np.ndarray = field(default_factory=lambda: DEFAULT_B2.copy())
    max_growth: float = DEFAULT_MAX_GROWTH
    nt_p: int = None

    def __post_init__(self):
        self.B1 = check_positive_grid("B1", self.B1)
        self.B2 = check_positive_grid("B2", self.B2)
        self.max_growth = check_positive("max_growth", self.max_growth)

    @property
    def pairs(self):
        return [RegPair(float(b1), float(b2))
                for b1, b2 in product(self.B1, self.B2)]

    def horizon(self, nt):
        nt_p = nt if self.nt_p is None else int(self.nt_p)
        if nt_p < nt:
            raise ValueError(
                f"trial horizon nt_p={nt_p} is shorter than the training "
                f"horizon nt={nt}")
        return nt_p


@dataclass
class TrialResult:
    pair: RegPair
    train_err: float
    trajectory: np.ndarray
    growth: float
    rom_seconds: float
    finite: bool
    admissible: bool
    operators: ReducedOperators = None
    solve_failed: bool = False


@dataclass
class SearchOutcome:
    """Globally optimal candidate, identical on every rank.

    Attributes
    ----------
    pair_opt : RegPair
    pair_index : int
        Position of ``pair_opt`` in the ``B1``-major candidate list.
    owner_rank : int
        Rank that evaluated the optimal pair.
    train_err : float
    trajectory : ndarray, shape (nt_p, r)
    rom_seconds : float
        Integration time of the optimal candidate on its owner rank.
    operators : ReducedOperators
    growth : float
    """

    pair_opt: RegPair
    pair_index: int
    owner_rank: int
    train_err: float
    trajectory: np.ndarray
    rom_seconds: float
    operators: ReducedOperators
    growth: float


def evaluate_pair(data, normal, Qhat_train, pair, nt_p, max_growth):
    """Learn, integrate and score one candidate pair.

    Parameters
    ----------
    data : OpInfData
    normal : tuple
        :func:`~dopinf.opinf.normal_equations` of ``data``.
    Qhat_train : ndarray, shape (nt, r)
        Reference reduced trajectory, time along rows.
    pair : RegPair
    nt_p : int
    max_growth : float
    """
    nt = Qhat_train.shape[0]
    gamma = build_regularizer(data.r, data.s, pair)
    try:
        ops = solve_opinf(data, gamma, normal)
    except OpInfSolveError:
        return TrialResult(pair, np.inf, None, np.nan, 0.0, False, False,
                           solve_failed=True)
    t0 = time.perf_counter()
    finite, traj = integrate(ops, Qhat_train[0], nt_p)
    rom_seconds = time.perf_counter() - t0
    if not finite:
        return TrialResult(pair, np.inf, traj, np.nan, rom_seconds, False,
                           False, ops)
    err = training_error(Qhat_train, traj[:nt])
    growth = growth_ratio(traj, Qhat_train)
    return TrialResult(pair, err, traj, growth, rom_seconds, True,
                       growth < max_growth, ops)


def grid_search(Qhat, config=None, comm=None):
    """Distributed search for the optimal regularization pair (collective).

    Parameters
    ----------
    Qhat : ndarray, shape (r, nt)
        Reduced training trajectory (identical on every rank).
    config : SearchConfig, optional
    comm : Communicator, optional

    Returns
    -------
    SearchOutcome

    Raises
    ------
    NoAdmissiblePairError
        On every rank, if no candidate anywhere is admissible.
    """
    config = config or SearchConfig()
    comm = comm or SerialComm()
    Qhat = np.asarray(Qhat, dtype=np.float64)
    Qhat_train = np.ascontiguousarray(Qhat.T)
    nt = Qhat_train.shape[0]
    nt_p = config.horizon(nt)

    pairs = config.pairs
    start, end = distribute_pairs(len(pairs), comm.rank, comm.size)
    data = assemble_data(Qhat)
    normal = normal_equations(data)

    best, best_index = None, -1
    diag = dict(rank=comm.rank, n_pairs=end - start, non_finite=0,
                solve_failed=0, growth_violations=0, min_growth=np.inf)
    for index in range(start, end):
        trial = evaluate_pair(data, normal, Qhat_train, pairs[index], nt_p,
                              config.max_growth)
        if trial.solve_failed:
            diag["solve_failed"] += 1
        elif not trial.finite:
            diag["non_finite"] += 1
        else:
            diag["min_growth"] = min(diag["min_growth"], trial.growth)
            if not trial.admissible:
                diag["growth_violations"] += 1
        # Strict comparison keeps the lowest index among ties.
        if trial.admissible and (best is None
                                 or trial.train_err < best.train_err):
            best, best_index = trial, index

    local_err = best.train_err if best is not None else np.inf
    global_err = float(comm.allreduce([local_err], ReduceOp.MIN)[0])
    if not np.isfinite(global_err):
        raise NoAdmissiblePairError(comm.allgather(diag))

    claim = comm.rank if local_err == global_err else comm.size
    owner = int(comm.allreduce([claim], ReduceOp.MIN)[0])
    payload = None
    if comm.rank == owner:
        payload = dict(index=best_index, beta1=best.pair.beta1,
                       beta2=best.pair.beta2, train_err=best.train_err,
                       trajectory=best.trajectory,
                       rom_seconds=best.rom_seconds, growth=best.growth,
                       A=best.operators.A, F=best.operators.F,
                       c=best.operators.c)
    payload = comm.broadcast_from(owner, payload)
    return SearchOutcome(
        pair_opt=RegPair(payload["beta1"], payload["beta2"]),
        pair_index=int(payload["index"]),
        owner_rank=owner,
        train_err=float(payload["train_err"]),
        trajectory=np.asarray(payload["trajectory"]),
        rom_seconds=float(payload["rom_seconds"]),
        operators=ReducedOperators(np.asarray(payload["A"]),
                                   np.asarray(payload["F"]),
                                   np.asarray(payload["c"])),
        growth=float(payload["growth"]),
    )


class OpInfGridSearch(RegressorMixin, BaseEstimator):
    """Choose ``(beta1, beta2)`` for :class:`DiscreteQuadraticOpInf` by
    minimal training error under a growth constraint, distributing the
    candidates over ``comm``.

    Parameters
    ----------
    B1, B2 : array_like, optional
        Candidate values (defaults: 8 log-spaced values in ``[1e-10, 1]``
        and in ``[1e-4, 1e4]``).
    max_growth : float, default=1.2
    nt_p : int, optional
        Trial horizon in time steps; defaults to the training length.
    comm : Communicator, optional

    Attributes
    ----------
    best_params_ : dict
        ``{"beta1": ..., "beta2": ...}``
    best_score_ : float
        Training error of the selected candidate.
    best_estimator_ : DiscreteQuadraticOpInf
    trajectory_ : ndarray, shape (nt_p, r)
    outcome_ : SearchOutcome
    """

    def __init__(self, B1=None, B2=None, max_growth=DEFAULT_MAX_GROWTH,
                 nt_p=None, comm=None):
        self.B1 = B1
        self.B2 = B2
        self.max_growth = max_growth
        self.nt_p = nt_p
        self.comm = comm

    def fit(self, X, y=None):
        """``X`` is the reduced training trajectory, shape ``(nt, r)``."""
        X = check_trajectory(X)
        config = SearchConfig(
            B1=DEFAULT_B1 if self.B1 is None else self.B1,
            B2=DEFAULT_B2 if self.B2 is None else self.B2,
            max_growth=self.max_growth, nt_p=self.nt_p)
        outcome = grid_search(X.T, config, self.comm)
        est = DiscreteQuadraticOpInf(beta1=outcome.pair_opt.beta1,
                                     beta2=outcome.pair_opt.beta2)
        est.operators_ = outcome.operators
        est.n_components_ = est.n_features_in_ = X.shape[1]

        self.outcome_ = outcome
        self.best_params_ = {"beta1": outcome.pair_opt.beta1,
                             "beta2": outcome.pair_opt.beta2}
        self.best_score_ = outcome.train_err
        self.best_estimator_ = est
        self.trajectory_ = outcome.trajectory
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "best_estimator_")
        return self.best_estimator_.predict(X)

    def simulate(self, q0, n_steps):
        check_is_fitted(self, "best_estimator_")
        return self.best_estimator_.simulate(q0, n_steps)
