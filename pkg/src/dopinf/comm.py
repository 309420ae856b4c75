"""Message-passing communicators.

Every pipeline stage is written against :class:`Communicator` and runs the
same way on

* :class:`SerialComm` -- a single rank, no communication;
* :class:`InProcessComm` -- ``p`` logical ranks executed as threads by
  :func:`run_inprocess`, exchanging payloads by value;
* :class:`MPIComm` -- one OS process per rank, backed by ``mpi4py``.
"""

import abc
import copy
import enum
import threading

import numpy as np

from .errors import CollectiveError

__all__ = [
    "ReduceOp",
    "Communicator",
    "SerialComm",
    "InProcessComm",
    "MPIComm",
    "run_inprocess",
    "DEFAULT_TIMEOUT",
]

DEFAULT_TIMEOUT = 120.0


class ReduceOp(enum.Enum):
    SUM = "sum"
    MAX = "max"
    MIN = "min"


def _combine(arrays, op):
    # Ascending rank order, so SUM is reproducible for fixed p.
    out = np.array(arrays[0], dtype=np.float64, copy=True)
    for a in arrays[1:]:
        if op is ReduceOp.SUM:
            out += a
        elif op is ReduceOp.MAX:
            np.maximum(out, a, out=out)
        elif op is ReduceOp.MIN:
            np.minimum(out, a, out=out)
        else:
            raise ValueError(f"unknown reduction {op!r}")
    return out


def _as_payload(local):
    return np.array(local, dtype=np.float64, copy=True)


def _copy_value(value):
    if isinstance(value, np.ndarray):
        return value.copy()
    return copy.deepcopy(value)


class Communicator(abc.ABC):
    """Minimal collective interface used by the pipeline.

    Attributes
    ----------
    rank : int
        Index of this worker, ``0 <= rank < size``.
    size : int
        Number of workers ``p``.
    """

    rank: int
    size: int

    @abc.abstractmethod
    def allreduce(self, local, op=ReduceOp.SUM):
        """Elementwise reduction of ``local`` over all ranks.

        Every rank must pass an array of the same shape; the combined array
        is returned on every rank.
        """

    @abc.abstractmethod
    def broadcast_from(self, owner, payload=None):
        """Return a value-identical copy of ``owner``'s payload on all ranks.

        Non-owner ranks may pass ``None``.
        """

    @abc.abstractmethod
    def barrier(self):
        pass

    @abc.abstractmethod
    def allgather(self, obj):
        """Return the list of every rank's ``obj``, indexed by rank."""

    def _check_owner(self, owner):
        if not 0 <= int(owner) < self.size:
            raise CollectiveError(
                f"broadcast owner {owner} outside [0, {self.size})")
        return int(owner)

    def __repr__(self):
        return f"{type(self).__name__}(rank={self.rank}, size={self.size})"


class SerialComm(Communicator):
    """Single-rank communicator; every collective is the identity."""

    rank = 0
    size = 1

    def allreduce(self, local, op=ReduceOp.SUM):
        if not isinstance(op, ReduceOp):
            raise ValueError(f"unknown reduction {op!r}")
        return _as_payload(local)

    def broadcast_from(self, owner, payload=None):
        self._check_owner(owner)
        return _copy_value(payload)

    def barrier(self):
        return None

    def allgather(self, obj):
        return [_copy_value(obj)]


class _Hub:
    """Shared rendezvous for the ranks of one :func:`run_inprocess` call."""

    def __init__(self, size, timeout):
        self.size = size
        self.timeout = timeout
        self.slots = [None] * size
        self.barrier = threading.Barrier(size)


class InProcessComm(Communicator):
    """One logical rank of a thread-backed communicator.

    Instances are created by :func:`run_inprocess`; each collective is a
    deposit/read cycle fenced by two barriers, so a slot is never overwritten
    before every rank has read it. A rank that does not arrive within
    ``timeout`` seconds breaks the barrier and every rank raises
    :class:`~dopinf.errors.CollectiveError`.
    """

    def __init__(self, rank, hub):
        self.rank = rank
        self.size = hub.size
        self._hub = hub

    def _wait(self):
        try:
            self._hub.barrier.wait(self._hub.timeout)
        except threading.BrokenBarrierError:
            err = CollectiveError(
                f"rank {self.rank}: collective aborted (a peer rank failed "
                f"or did not arrive within {self._hub.timeout} s)")
            err.peer_abort = True
            raise err from None

    def _exchange(self, payload):
        self._hub.slots[self.rank] = payload
        self._wait()
        snapshot = list(self._hub.slots)
        self._wait()
        return snapshot

    def allreduce(self, local, op=ReduceOp.SUM):
        if not isinstance(op, ReduceOp):
            raise ValueError(f"unknown reduction {op!r}")
        arrays = self._exchange(_as_payload(local))
        shapes = {a.shape for a in arrays}
        if len(shapes) != 1:
            raise CollectiveError(
                "allreduce payload shapes differ across ranks: "
                + ", ".join(f"rank {i}: {a.shape}"
                            for i, a in enumerate(arrays)))
        return _combine(arrays, op)

    def broadcast_from(self, owner, payload=None):
        owner = self._check_owner(owner)
        deposit = _copy_value(payload) if self.rank == owner else None
        values = self._exchange(deposit)
        return _copy_value(values[owner])

    def barrier(self):
        self._exchange(None)

    def allgather(self, obj):
        values = self._exchange(_copy_value(obj))
        return [_copy_value(v) for v in values]


def run_inprocess(fn, workers, *args, timeout=DEFAULT_TIMEOUT, **kwargs):
    """Run ``fn(comm, *args, **kwargs)`` on ``workers`` logical ranks.

    Parameters
    ----------
    fn : callable
        Per-rank program; receives an :class:`InProcessComm` first.
    workers : int
        Number of ranks ``p >= 1``.
    timeout : float
        Seconds a rank may wait at a collective before it is declared hung.

    Returns
    -------
    list
        ``fn``'s return value for each rank, indexed by rank.

    Raises
    ------
    Exception
        The first (lowest-rank) error raised by ``fn``. Secondary errors on
        other ranks caused by the resulting barrier abort are suppressed.
        The raised exception carries a ``rank`` attribute.
    """
    workers = int(workers)
    if workers < 1:
        raise ValueError(f"workers must be >= 1, got {workers}")
    hub = _Hub(workers, timeout)
    results = [None] * workers
    errors = [None] * workers

    def target(rank):
        comm = InProcessComm(rank, hub)
        try:
            results[rank] = fn(comm, *args, **kwargs)
        except BaseException as exc:  # noqa: BLE001 - re-raised below
            errors[rank] = exc
            hub.barrier.abort()

    if workers == 1:
        target(0)
    else:
        threads = [threading.Thread(target=target, args=(i,),
                                    name=f"dopinf-rank-{i}", daemon=True)
                   for i in range(workers)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()

    failed = [(i, e) for i, e in enumerate(errors) if e is not None]
    if failed:
        primary = [(i, e) for i, e in failed
                   if not getattr(e, "peer_abort", False)]
        rank, exc = (primary or failed)[0]
        try:
            exc.rank = rank
        except AttributeError:
            pass
        raise exc
    return results


class MPIComm(Communicator):
    """Wrapper around an ``mpi4py`` intra-communicator.

    Launch the program with ``mpirun -n <p>``; each process constructs its
    own instance (``MPIComm()`` wraps ``MPI.COMM_WORLD``).
    """

    def __init__(self, comm=None):
        try:
            from mpi4py import MPI
        except ImportError as exc:  # pragma: no cover - depends on install
            raise CollectiveError(
                "the mpi backend requires mpi4py (pip install mpi4py)") from exc
        self._MPI = MPI
        self._comm = MPI.COMM_WORLD if comm is None else comm
        self.rank = self._comm.Get_rank()
        self.size = self._comm.Get_size()

    def _mpi_op(self, op):
        ops = {ReduceOp.SUM: self._MPI.SUM, ReduceOp.MAX: self._MPI.MAX,
               ReduceOp.MIN: self._MPI.MIN}
        if op not in ops:
            raise ValueError(f"unknown reduction {op!r}")
        return ops[op]

    def allreduce(self, local, op=ReduceOp.SUM):
        mpi_op = self._mpi_op(op)
        buf = np.ascontiguousarray(_as_payload(local))
        shapes = self._comm.allgather(buf.shape)
        if len(set(shapes)) != 1:
            raise CollectiveError(
                "allreduce payload shapes differ across ranks: "
                + ", ".join(f"rank {i}: {s}" for i, s in enumerate(shapes)))
        out = np.empty_like(buf)
        self._comm.Allreduce(buf, out, op=mpi_op)
        return out

    def broadcast_from(self, owner, payload=None):
        owner = self._check_owner(owner)
        value = self._comm.bcast(payload if self.rank == owner else None,
                                 root=owner)
        return _copy_value(value) if self.rank == owner else value

    def barrier(self):
        self._comm.Barrier()

    def allgather(self, obj):
        return self._comm.allgather(obj)
