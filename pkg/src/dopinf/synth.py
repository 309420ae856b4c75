"""Synthetic full-order datasets with known structure.

``generate_quadratic`` embeds a latent quadratic map in a random
``r_true``-dimensional affine subspace, so the reduced operators that the
pipeline should learn are known exactly. ``generate_diffusion`` integrates
the 1-D heat equation, giving smooth data with fast spectral decay.
"""

from dataclasses import dataclass, field

import numpy as np

from .data import SnapshotHeader, write_snapshots
from .errors import SynthesisError
from .opinf import ReducedOperators, n_quadratic, quad_nonredundant

__all__ = [
    "QuadraticDynamics",
    "DiffusionDynamics",
    "SynthSpec",
    "QuadraticTruth",
    "random_orthonormal",
    "generate_quadratic",
    "generate_diffusion",
    "save_truth",
    "load_truth",
    "expand_quadratic",
    "operators_in_basis",
]

MAX_RESAMPLES = 100


@dataclass
class QuadraticDynamics:
    """Latent map ``z[k+1] = A z[k] + F quad(z[k]) + c``.

    Operators left as None are drawn at random: ``A`` is a random rotation
    of 2x2 damped-rotation blocks with spectral radius
    ``spectral_radius``; ``F`` and ``c`` are Gaussian, scaled by
    ``quad_scale / sqrt(s)`` and ``const_scale``.
    """

    A: np.ndarray = None
    F: np.ndarray = None
    c: np.ndarray = None
    z0: np.ndarray = None
    spectral_radius: float = 0.95
    quad_scale: float = 0.2
    const_scale: float = 0.1
    z0_scale: float = 1.0
    mean_scale: float = 1.0
    bound: float = 1e3


@dataclass
class DiffusionDynamics:
    """Explicit finite differences for ``u_t = kappa u_xx`` on ``(0, L)``
    with zero boundary values.

    ``initial`` is ``"smooth"`` (random decaying sine series of
    ``n_modes`` terms), ``"sine"`` (first eigenmode) or ``"zero"``.
    ``dt=None`` picks 0.4 of the stability limit.
    """

    length: float = 1.0
    conductivity: float = 1e-2
    dt: float = None
    initial: str = "smooth"
    n_modes: int = 10


@dataclass
class SynthSpec:
    nx: int
    nt: int
    nt_p: int = None
    n_vars: int = 1
    r_true: int = 3
    seed: int = 0
    dynamics: object = field(default_factory=QuadraticDynamics)

    def __post_init__(self):
        if self.nt < 2:
            raise SynthesisError("nt must be >= 2")
        if self.nt_p is None:
            self.nt_p = self.nt
        if self.nt_p < self.nt:
            raise SynthesisError("nt_p must be >= nt")
        if self.nx < 1 or self.n_vars < 1:
            raise SynthesisError("nx and n_vars must be >= 1")

    @property
    def n(self):
        return self.n_vars * self.nx

    @property
    def var_names(self):
        if self.n_vars == 1:
            return ("u",)
        return tuple(f"u{j}" for j in range(self.n_vars))


@dataclass
class QuadraticTruth:
    """Ground truth of a quadratic dataset.

    ``latent`` has shape ``(nt_p, r_true)``; snapshot ``k`` equals
    ``V @ latent[k] + mu`` (variables stacked, variable-major).
    """

    A: np.ndarray
    F: np.ndarray
    c: np.ndarray
    V: np.ndarray
    mu: np.ndarray
    latent: np.ndarray

    @property
    def operators(self):
        return ReducedOperators(self.A, self.F, self.c)


def random_orthonormal(m, r, seed=None):
    """``m x r`` matrix with orthonormal columns (QR of a Gaussian matrix,
    signs fixed so ``R`` has a positive diagonal)."""
    if r > m:
        raise ValueError(f"cannot build {r} orthonormal columns in R^{m}")
    rng = np.random.default_rng(seed)
    Q, R = np.linalg.qr(rng.standard_normal((m, r)))
    signs = np.sign(np.diag(R))
    signs[signs == 0] = 1.0
    return Q * signs


def _random_linear(rng, r, radius):
    B = np.zeros((r, r))
    for k in range(0, r - 1, 2):
        theta = rng.uniform(0.2, 0.5)
        B[k:k + 2, k:k + 2] = radius * np.array(
            [[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    if r % 2:
        B[r - 1, r - 1] = 0.9 * radius
    O = random_orthonormal(r, r, rng)
    return O @ B @ O.T


def _iterate(A, F, c, z0, n_steps):
    Z = np.empty((n_steps, z0.size))
    Z[0] = z0
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(n_steps - 1):
            Z[k + 1] = A @ Z[k] + F @ quad_nonredundant(Z[k]) + c
            if not np.all(np.isfinite(Z[k + 1])):
                Z[k + 2:] = np.nan
                break
    return Z


def _stack_to_matrices(S, n_vars, nx):
    # S is (n, nt) with variables stacked vertically.
    return [S[j * nx:(j + 1) * nx] for j in range(n_vars)]


def generate_quadratic(spec, path=None):
    """Draw (or use) latent quadratic dynamics and embed them.

    Parameters
    ----------
    spec : SynthSpec
        ``spec.dynamics`` must be a :class:`QuadraticDynamics`.
    path : str, optional
        If given, the ``nt`` training snapshots are written there in SNP1
        format and the ground truth to ``<path>.truth.npz``.

    Returns
    -------
    QuadraticTruth

    Raises
    ------
    SynthesisError
        If the dynamics diverge (after ``MAX_RESAMPLES`` draws when the
        operators are random).
    """
    dyn = spec.dynamics
    if not isinstance(dyn, QuadraticDynamics):
        raise SynthesisError("generate_quadratic needs QuadraticDynamics")
    r = spec.r_true
    if not 1 <= r <= spec.nt - 1:
        raise SynthesisError(f"r_true={r} must lie in [1, nt-1={spec.nt - 1}]")
    if r > spec.n:
        raise SynthesisError(f"r_true={r} exceeds the state dimension {spec.n}")
    if dyn.spectral_radius > 0.95:
        raise SynthesisError("spectral radius of A must be <= 0.95")
    rng = np.random.default_rng(spec.seed)
    fixed = dyn.A is not None and dyn.F is not None and dyn.c is not None
    s = n_quadratic(r)

    for _ in range(1 if fixed else MAX_RESAMPLES):
        A = _random_linear(rng, r, dyn.spectral_radius) if dyn.A is None \
            else np.asarray(dyn.A, dtype=np.float64)
        F = dyn.quad_scale * rng.standard_normal((r, s)) / np.sqrt(s) \
            if dyn.F is None else np.asarray(dyn.F, dtype=np.float64)
        c = dyn.const_scale * rng.standard_normal(r) if dyn.c is None \
            else np.asarray(dyn.c, dtype=np.float64)
        z0 = dyn.z0_scale * rng.standard_normal(r) if dyn.z0 is None \
            else np.asarray(dyn.z0, dtype=np.float64)
        Z = _iterate(A, F, c, z0, spec.nt_p)
        limit = dyn.bound * max(1.0, float(np.max(np.abs(z0))))
        if np.all(np.isfinite(Z)) and np.max(np.abs(Z)) <= limit:
            break
    else:
        raise SynthesisError(
            "latent quadratic dynamics diverged"
            + ("" if fixed else f" in {MAX_RESAMPLES} draws"))

    V = random_orthonormal(spec.n, r, rng)
    mu = dyn.mean_scale * rng.standard_normal(spec.n)
    truth = QuadraticTruth(A=A, F=F, c=c, V=V, mu=mu, latent=Z)
    if path is not None:
        S = V @ Z[:spec.nt].T + mu[:, None]
        header = SnapshotHeader(spec.n_vars, spec.nx, spec.nt, spec.var_names)
        write_snapshots(path, header, _stack_to_matrices(S, spec.n_vars, spec.nx))
        save_truth(f"{path}.truth.npz", truth)
    return truth


def generate_diffusion(spec, path=None):
    """Integrate the 1-D heat equation for ``nt_p`` steps.

    Returns the full ``(n, nt_p)`` snapshot matrix; the first ``nt``
    columns are written to ``path`` when given.

    Raises
    ------
    SynthesisError
        If ``kappa * dt / dx**2 > 0.5``.
    """
    dyn = spec.dynamics
    if not isinstance(dyn, DiffusionDynamics):
        raise SynthesisError("generate_diffusion needs DiffusionDynamics")
    nx = spec.nx
    dx = dyn.length / (nx + 1)
    x = dx * np.arange(1, nx + 1)
    dt = 0.4 * dx ** 2 / dyn.conductivity if dyn.dt is None else dyn.dt
    mu = dyn.conductivity * dt / dx ** 2
    if mu > 0.5:
        raise SynthesisError(
            f"unstable explicit scheme: kappa*dt/dx^2 = {mu:.3g} > 0.5")

    rng = np.random.default_rng(spec.seed)
    blocks = []
    for _ in range(spec.n_vars):
        if dyn.initial == "zero":
            u = np.zeros(nx)
        elif dyn.initial == "sine":
            u = np.sin(np.pi * x / dyn.length)
        elif dyn.initial == "smooth":
            k = np.arange(1, dyn.n_modes + 1)
            amps = rng.standard_normal(dyn.n_modes) / k ** 2
            u = np.sin(np.pi * np.outer(x, k) / dyn.length) @ amps
        else:
            raise SynthesisError(f"unknown initial condition {dyn.initial!r}")
        U = np.empty((nx, spec.nt_p))
        U[:, 0] = u
        for j in range(spec.nt_p - 1):
            lap = -2.0 * u
            lap[1:] += u[:-1]
            lap[:-1] += u[1:]
            u = u + mu * lap
            U[:, j + 1] = u
        blocks.append(U)
    S = np.vstack(blocks)
    if path is not None:
        header = SnapshotHeader(spec.n_vars, nx, spec.nt, spec.var_names)
        write_snapshots(path, header, [b[:, :spec.nt] for b in blocks])
    return S


def save_truth(path, truth):
    np.savez(path, A=truth.A, F=truth.F, c=truth.c, V=truth.V, mu=truth.mu,
             latent=truth.latent)


def load_truth(path):
    with np.load(path) as f:
        return QuadraticTruth(**{k: f[k] for k in
                                 ("A", "F", "c", "V", "mu", "latent")})


def expand_quadratic(F):
    """Full ``(r, r^2)`` operator ``H`` with ``H (q kron q) = F quad(q)``;
    each distinct product's coefficient is placed on its ``i <= j`` slot."""
    r = F.shape[0]
    H = np.zeros((r, r * r))
    col = 0
    for i in range(r):
        for j in range(i, r):
            H[:, i * r + j] = F[:, col]
            col += 1
    return H


def _compress_quadratic(H):
    r = H.shape[0]
    F = np.empty((r, n_quadratic(r)))
    col = 0
    for i in range(r):
        for j in range(i, r):
            F[:, col] = H[:, i * r + i] if i == j \
                else H[:, i * r + j] + H[:, j * r + i]
            col += 1
    return F


def operators_in_basis(ops, R, shift):
    """Express a quadratic map in the coordinates ``y = R (z - shift)``.

    Parameters
    ----------
    ops : ReducedOperators
        Map ``z -> A z + F quad(z) + c``.
    R : ndarray, shape (r, r)
        Invertible change of basis.
    shift : ndarray, shape (r,)

    Returns
    -------
    ReducedOperators
        Operators of ``y -> R (f(R^{-1} y + shift) - shift)``.
    """
    R = np.asarray(R, dtype=np.float64)
    b = np.asarray(shift, dtype=np.float64)
    M = np.linalg.inv(R)
    H = expand_quadratic(ops.F)
    bc = b[:, None]
    A_new = R @ (ops.A @ M + H @ (np.kron(M, bc) + np.kron(bc, M)))
    F_new = _compress_quadratic(R @ H @ np.kron(M, M))
    c_new = R @ (ops.A @ b + H @ np.kron(b, b) + ops.c - b)
    return ReducedOperators(A_new, F_new, c_new)
