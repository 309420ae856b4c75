"""Compare the distributed reduction of a dataset with a serial SVD.

The serial route loads the whole snapshot matrix, applies the same
centering and scaling, and takes a thin SVD. The distributed route runs
the Gram, eigendecomposition and projection stages under the in-process
backend for each requested worker count.
"""

from dataclasses import dataclass

import numpy as np

from .comm import run_inprocess
from .data import load_block, read_header, read_rows
from .pod import eig_sym_desc, global_gram, local_gram, project, reduced_map, \
    select_rank, DEFAULT_ENERGY
from .transform import fit_transform_block

__all__ = ["Check", "reduce_distributed", "serial_reduction", "verify_dataset"]


@dataclass
class Check:
    name: str
    value: float
    tol: float

    @property
    def passed(self):
        return bool(np.isfinite(self.value) and self.value <= self.tol)

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name}: {self.value:.3e} (tol {self.tol:.0e})"


def _reduce_rank(comm, path, energy, rank, scaling):
    header, plan, block = load_block(path, comm)
    fit_transform_block(block, comm, scaling, header.var_names)
    D = global_gram(local_gram(block.values), comm)
    spectrum = eig_sym_desc(D)
    r = int(rank) if rank is not None \
        else select_rank(spectrum.eigenvalues, energy)
    Tr = reduced_map(spectrum, r)
    return dict(D=D, eigenvalues=spectrum.eigenvalues, r=r, Tr=Tr,
                Qhat=project(Tr, D))


def reduce_distributed(path, workers, energy=DEFAULT_ENERGY, rank=None,
                       scaling=False):
    """Gram, eigendecomposition and projection on ``workers`` ranks; returns
    rank 0's dict with keys ``D, eigenvalues, r, Tr, Qhat``."""
    return run_inprocess(_reduce_rank, workers, path, energy, rank,
                         scaling)[0]


def serial_reduction(path, scaling=False):
    """Whole transformed snapshot matrix and its thin SVD.

    Returns
    -------
    Q : ndarray, shape (n, nt)
    U : ndarray, shape (n, k)
    sigma : ndarray, shape (k,)
    """
    header = read_header(path)
    blocks = []
    for j in range(header.n_vars):
        X = read_rows(path, header, j, 0, header.nx)
        X = X - X.mean(axis=1, keepdims=True)
        if scaling:
            X = X / np.max(np.abs(X))
        blocks.append(X)
    Q = np.vstack(blocks)
    U, sigma, _ = np.linalg.svd(Q, full_matrices=False)
    return Q, U, sigma


def _rel_diff(a, b):
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))


def verify_dataset(path, workers=(1, 2, 4), energy=DEFAULT_ENERGY, rank=None,
                   scaling=False):
    """Run the comparison suite on a snapshot file.

    Returns
    -------
    list of Check
    """
    Q, U, sigma = serial_reduction(path, scaling)
    checks = []
    base = None
    for p in workers:
        red = reduce_distributed(path, p, energy, rank, scaling)
        r, Tr, Qhat, D = red["r"], red["Tr"], red["Qhat"], red["D"]
        lam = red["eigenvalues"]
        scale = np.sqrt(lam[0])

        oracle = U[:, :r].T @ Q
        signs = np.sign(np.sum(oracle * Qhat, axis=1))
        signs[signs == 0] = 1.0
        checks.append(Check(f"p={p} Qhat vs thin SVD (rel. sqrt(lambda_1))",
                            float(np.max(np.abs(Qhat - signs[:, None] * oracle))
                                  / scale), 1e-8))
        checks.append(Check(f"p={p} Tr^T D Tr = I",
                            float(np.max(np.abs(Tr.T @ D @ Tr - np.eye(r)))),
                            1e-8))
        checks.append(Check(f"p={p} Qhat Qhat^T = diag(lambda)",
                            float(np.max(np.abs(Qhat @ Qhat.T
                                                - np.diag(lam[:r])))
                                  / lam[0]), 1e-8))
        V = Q @ Tr
        residual = float(np.linalg.norm(Q - V @ (V.T @ Q)) ** 2)
        tail = float(np.sum(lam[r:]))
        floor = 1e-10 * float(np.sum(lam))
        checks.append(Check(f"p={p} truncation energy",
                            abs(residual - tail) / max(tail, floor), 1e-6))
        if base is None:
            base = red
        else:
            checks.append(Check(f"p={p} Gram matrix vs p={workers[0]}",
                                _rel_diff(D, base["D"]), 1e-10))
            checks.append(Check(f"p={p} eigenvalues vs p={workers[0]}",
                                _rel_diff(lam, base["eigenvalues"]), 1e-10))
            checks.append(Check(f"p={p} rank vs p={workers[0]}",
                                float(r != base["r"]), 0.0))
    return checks
