"""Shared numerical routines: Lyapunov solvers, discretization, rank tests.

All matrix-valued results that are symmetric by construction are
symmetrized explicitly, so downstream eigenvalue checks never see the
asymmetric roundoff residue of a product chain.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .exceptions import NumericalFailure, UnstableOperatorError

__all__ = [
    "Tolerances",
    "DEFAULT_TOLERANCES",
    "symmetrize",
    "spectral_radius",
    "solve_dlyap",
    "iterate_lyap",
    "LyapunovIterates",
    "zoh_discretize",
    "rank_tol",
    "min_symmetric_eigenvalue",
    "psd_sqrt",
]


@dataclass(frozen=True)
class Tolerances:
    """Numeric knobs threaded through every solver.

    Attributes
    ----------
    convergence_eps : float
        Relative fixed-point tolerance for iterative solvers.
    divergence_cap : float
        Trace blow-up factor that declares an iteration divergent.
    max_iters : int
        Iteration budget before a solver gives up.
    rank_eps : float
        Relative singular-value threshold for numerical rank.
    """

    convergence_eps: float = 1e-10
    divergence_cap: float = 1e8
    max_iters: int = 10**6
    rank_eps: float = 1e-10


DEFAULT_TOLERANCES = Tolerances()


def symmetrize(M: np.ndarray) -> np.ndarray:
    """Return the symmetric part (M + M^T) / 2."""
    return (M + M.T) / 2.0


def _require_finite(M: np.ndarray, name: str) -> np.ndarray:
    M = np.asarray(M, dtype=float) if not np.iscomplexobj(M) else np.asarray(M)
    if not np.all(np.isfinite(M)):
        raise ValueError(f"{name} contains non-finite entries")
    return M


def spectral_radius(M: np.ndarray) -> float:
    """Largest eigenvalue magnitude of a square matrix."""
    M = _require_finite(M, "M")
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("spectral_radius needs a square matrix")
    try:
        eigs = np.linalg.eigvals(M)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"eigenvalue solver failed: {exc}") from exc
    return float(np.max(np.abs(eigs))) if eigs.size else 0.0


def solve_dlyap(
    A: np.ndarray,
    M: np.ndarray,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> np.ndarray:
    """Solve X = A X A^T + M for Schur-stable A by the doubling iteration.

    The iteration squares the propagator each round
    (X <- X + A_j X A_j^T, A_j <- A_j^2), so it converges in
    O(log(1/eps)) rounds for any spectral radius below one.

    Raises
    ------
    UnstableOperatorError
        If the spectral radius of ``A`` is 1 or larger.
    NumericalFailure
        If the iteration budget runs out or the substituted-back
        residual exceeds the convergence tolerance.
    """
    A = _require_finite(A, "A")
    M = _require_finite(M, "M")
    rho = spectral_radius(A)
    if rho >= 1.0:
        raise UnstableOperatorError(
            f"solve_dlyap requires spectral radius < 1, got {rho:.6g}"
        )
    X = M.astype(float).copy()
    Apow = A.copy()
    converged = False
    for _ in range(min(tol.max_iters, 256)):
        X_next = X + Apow @ X @ Apow.T
        if np.linalg.norm(X_next - X, "fro") <= tol.convergence_eps * (
            1.0 + np.linalg.norm(X_next, "fro")
        ):
            X = X_next
            converged = True
            break
        X = X_next
        Apow = Apow @ Apow
    if not converged:
        raise NumericalFailure("doubling iteration did not converge")
    X = symmetrize(X)
    residual = np.linalg.norm(X - A @ X @ A.T - M, "fro")
    if residual > tol.convergence_eps * (1.0 + np.linalg.norm(X, "fro")):
        raise NumericalFailure(
            f"Lyapunov residual {residual:.3e} above tolerance"
        )
    return X


@dataclass
class LyapunovIterates:
    """Finite prefix of the recursion X_{k+1} = A X_k A^T + M.

    ``diverged`` is set when an iterate overflowed; ``iterates`` then
    holds everything up to the last finite matrix.
    """

    iterates: list[np.ndarray]
    diverged: bool


def iterate_lyap(
    A: np.ndarray,
    M: np.ndarray,
    X0: np.ndarray,
    steps: int,
) -> LyapunovIterates:
    """Run X_{k+1} = A X_k A^T + M for ``steps`` steps from X0.

    No stability assumption and no positivity clamping: iterates are
    reported exactly as the recursion produces them (symmetrized).
    """
    A = _require_finite(A, "A")
    M = _require_finite(M, "M")
    X = _require_finite(X0, "X0")
    out: list[np.ndarray] = []
    for _ in range(steps):
        X = symmetrize(A @ X @ A.T + M)
        if not np.all(np.isfinite(X)):
            return LyapunovIterates(out, True)
        out.append(X)
    return LyapunovIterates(out, False)


def zoh_discretize(
    Ac: np.ndarray,
    Bc: np.ndarray,
    dt: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Zero-order-hold discretization of a continuous pair (Ac, Bc).

    Uses the matrix exponential of the augmented block
    [[Ac, Bc], [0, 0]] * dt, whose top row is [A, B].
    """
    Ac = _require_finite(Ac, "Ac")
    Bc = _require_finite(Bc, "Bc")
    if dt <= 0:
        raise ValueError("dt must be positive")
    n = Ac.shape[0]
    if Ac.shape != (n, n) or Bc.shape[0] != n:
        raise ValueError("Ac must be square and Bc row-compatible")
    p = Bc.shape[1]
    blk = np.zeros((n + p, n + p))
    blk[:n, :n] = Ac
    blk[:n, n:] = Bc
    E = expm(blk * dt)
    if not np.all(np.isfinite(E)):
        raise NumericalFailure("matrix exponential produced non-finite entries")
    return E[:n, :n], E[:n, n:]


def rank_tol(M: np.ndarray, tol: Tolerances = DEFAULT_TOLERANCES) -> int:
    """Numerical rank: singular values above rank_eps * smax * max(shape)."""
    M = np.asarray(M)
    if M.size == 0:
        return 0
    try:
        svals = np.linalg.svd(M, compute_uv=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"SVD failed: {exc}") from exc
    threshold = tol.rank_eps * svals[0] * max(M.shape)
    return int(np.sum(svals > threshold))


def min_symmetric_eigenvalue(M: np.ndarray) -> float:
    """Smallest eigenvalue of the symmetric part of M."""
    try:
        return float(np.linalg.eigvalsh(symmetrize(np.asarray(M, dtype=float)))[0])
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"symmetric eigensolver failed: {exc}") from exc


def psd_sqrt(M: np.ndarray) -> np.ndarray:
    """Symmetric square root of a PSD matrix, negative roundoff clipped."""
    w, V = np.linalg.eigh(symmetrize(np.asarray(M, dtype=float)))
    return V @ np.diag(np.sqrt(np.clip(w, 0.0, None))) @ V.T
