import numpy as np
import pytest

from dopinf.comm import run_inprocess
from dopinf.data import SnapshotHeader, write_snapshots


def write_matrix(path, matrices, names=None):
    """Write per-variable ``(nx, nt)`` matrices and return the header."""
    matrices = [np.asarray(m, dtype=np.float64) for m in matrices]
    nx, nt = matrices[0].shape
    names = names or [f"v{j}" for j in range(len(matrices))]
    header = SnapshotHeader(len(matrices), nx, nt, names)
    write_snapshots(path, header, matrices)
    return header


def collective(fn, p, *args, **kwargs):
    """Run ``fn(comm, *args)`` on ``p`` in-process ranks."""
    return run_inprocess(fn, p, *args, timeout=30, **kwargs)


def low_rank(rng, m, n, rank, decay=1.0):
    """Random ``m x n`` matrix of the given rank with geometric singular
    values."""
    U, _ = np.linalg.qr(rng.standard_normal((m, rank)))
    V, _ = np.linalg.qr(rng.standard_normal((n, rank)))
    s = decay ** np.arange(rank) * 10.0
    return (U * s) @ V.T


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def reduced_quadratic(seed=7, nx=400, nt=200, r=3, nt_p=None):
    """Synthetic quadratic dataset reduced at ``r`` (serial).

    Returns ``(truth, S, Qhat)`` with ``S`` the ``(nx, nt)`` snapshots and
    ``Qhat`` the ``(r, nt)`` reduced trajectory.
    """
    from dopinf.pod import eig_sym_desc, project, reduced_map
    from dopinf.synth import SynthSpec, generate_quadratic

    truth = generate_quadratic(SynthSpec(nx=nx, nt=nt, nt_p=nt_p, r_true=r,
                                         seed=seed))
    S = truth.V @ truth.latent[:nt].T + truth.mu[:, None]
    Q = S - S.mean(axis=1, keepdims=True)
    D = Q.T @ Q
    Qhat = project(reduced_map(eig_sym_desc(D), r), D)
    return truth, S, Qhat


ACCEPTANCE_LINES = []


def record_acceptance(line):
    """Print an acceptance verdict and keep it for the terminal summary."""
    print(line)
    ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
