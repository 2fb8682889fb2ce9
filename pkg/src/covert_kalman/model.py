"""Linear-Gaussian plant model and the sensor-side Kalman filter.

The sensor runs a standard predict/update Kalman cycle and transmits
innovations rather than raw measurements. Everything downstream
(encryption, eavesdropper analysis, design) builds on the filter
quantities defined here.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .exceptions import ModelValidationError, NumericalFailure
from .numerics import (
    DEFAULT_TOLERANCES,
    Tolerances,
    min_symmetric_eigenvalue,
    rank_tol,
    symmetrize,
)

__all__ = [
    "SystemModel",
    "SensorFilterState",
    "SteadyState",
    "validate_model",
    "initial_sensor_state",
    "kalman_step",
    "innovation",
    "steady_state",
    "sensor_covariance_sequences",
]

# Eigenvalues this close to the unit circle are treated as marginal in
# stabilizability/detectability tests.
_UNIT_CIRCLE_SLACK = 1e-9


@dataclass(frozen=True)
class SystemModel:
    """Discrete-time model x_{k+1} = A x_k + B w_k, z_k = C x_k + v_k.

    w_k ~ N(0, Q) and v_k ~ N(0, R) are white and mutually independent;
    the initial state is N(x0_mean, P0).
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    x0_mean: np.ndarray
    P0: np.ndarray

    def __post_init__(self):
        for name in ("A", "B", "C", "Q", "R", "x0_mean", "P0"):
            arr = np.asarray(getattr(self, name), dtype=float)
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def p(self) -> int:
        return self.B.shape[1]

    @property
    def m(self) -> int:
        return self.C.shape[0]

    def process_noise_cov(self) -> np.ndarray:
        """State-space process noise covariance B Q B^T."""
        return self.B @ self.Q @ self.B.T

    def with_initial_cov(self, P0: np.ndarray) -> "SystemModel":
        return replace(self, P0=np.asarray(P0, dtype=float))


@dataclass
class SensorFilterState:
    """Sensor filter state after the update at time ``k``.

    ``x_pred``/``P_pred`` are the one-step predictions for the same
    time index, kept so the innovation at ``k`` can be reconstructed.
    """

    k: int
    x_pred: np.ndarray
    P_pred: np.ndarray
    x_filt: np.ndarray
    P_filt: np.ndarray
    gain: np.ndarray


@dataclass(frozen=True)
class SteadyState:
    """Limits of the sensor filter recursions.

    Attributes
    ----------
    P_minus, P_plus : ndarray
        Predicted and filtered error covariance limits.
    gain : ndarray
        Steady Kalman gain.
    N : int
        First step at which successive filtered covariances agreed to
        the convergence tolerance (0 when P0 is already the limit).
    """

    P_minus: np.ndarray
    P_plus: np.ndarray
    gain: np.ndarray
    N: int


def _unit_or_outside_eigs(A: np.ndarray) -> np.ndarray:
    eigs = np.linalg.eigvals(A)
    return eigs[np.abs(eigs) >= 1.0 - _UNIT_CIRCLE_SLACK]


def _pbh_stabilizable(A: np.ndarray, B: np.ndarray, tol: Tolerances) -> list[complex]:
    """Eigenvalues on or outside the unit circle failing the PBH rank test."""
    n = A.shape[0]
    bad = []
    for lam in _unit_or_outside_eigs(A):
        stacked = np.hstack([lam * np.eye(n) - A, B])
        if rank_tol(stacked, tol) < n:
            bad.append(complex(lam))
    return bad


def _pbh_detectable(A: np.ndarray, C: np.ndarray, tol: Tolerances) -> list[complex]:
    """Eigenvalues on or outside the unit circle unseen by the output map."""
    n = A.shape[0]
    bad = []
    for lam in _unit_or_outside_eigs(A):
        stacked = np.vstack([lam * np.eye(n) - A, C])
        if rank_tol(stacked, tol) < n:
            bad.append(complex(lam))
    return bad


def validate_model(
    model: SystemModel,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> SystemModel:
    """Check every structural requirement; return the model unchanged.

    Raises
    ------
    ModelValidationError
        Naming the first violated requirement (dimension mismatch,
        non-finite entries, rank-deficient C, indefinite Q or R,
        indefinite P0, unstabilizable or undetectable pair).
    """
    n, p, m = model.n, model.p, model.m
    shapes = {
        "A": (model.A, (n, n)),
        "B": (model.B, (n, p)),
        "C": (model.C, (m, n)),
        "Q": (model.Q, (p, p)),
        "R": (model.R, (m, m)),
        "x0_mean": (model.x0_mean, (n,)),
        "P0": (model.P0, (n, n)),
    }
    for name, (arr, want) in shapes.items():
        if arr.shape != want:
            raise ModelValidationError(
                f"{name}: expected shape {want}, got {arr.shape}"
            )
        if not np.all(np.isfinite(arr)):
            raise ModelValidationError(f"{name}: contains non-finite entries")
    if rank_tol(model.C, tol) < m:
        raise ModelValidationError("C: rows are not linearly independent")
    for name, arr in (("Q", model.Q), ("R", model.R)):
        if np.linalg.norm(arr - arr.T, "fro") > 1e-10 * (1 + np.linalg.norm(arr, "fro")):
            raise ModelValidationError(f"{name}: not symmetric")
        if min_symmetric_eigenvalue(arr) <= 0:
            raise ModelValidationError(f"{name}: not positive definite")
    if np.linalg.norm(model.P0 - model.P0.T, "fro") > 1e-10 * (
        1 + np.linalg.norm(model.P0, "fro")
    ):
        raise ModelValidationError("P0: not symmetric")
    if min_symmetric_eigenvalue(model.P0) < -1e-8 * (1 + np.trace(model.P0)):
        raise ModelValidationError("P0: not positive semidefinite")
    bad = _pbh_stabilizable(model.A, model.B, tol)
    if bad:
        raise ModelValidationError(
            f"(A, B): unstabilizable mode at eigenvalue {bad[0]:.6g}"
        )
    bad = _pbh_detectable(model.A, model.C, tol)
    if bad:
        raise ModelValidationError(
            f"(A, C): undetectable mode at eigenvalue {bad[0]:.6g}"
        )
    return model


def initial_sensor_state(model: SystemModel) -> SensorFilterState:
    """Filter state at k = 0, before any measurement."""
    return SensorFilterState(
        k=0,
        x_pred=model.x0_mean.copy(),
        P_pred=model.P0.copy(),
        x_filt=model.x0_mean.copy(),
        P_filt=model.P0.copy(),
        gain=np.zeros((model.n, model.m)),
    )


def _update_gain(P_pred: np.ndarray, model: SystemModel) -> tuple[np.ndarray, np.ndarray]:
    """Kalman gain and filtered covariance from a predicted covariance."""
    S = symmetrize(model.C @ P_pred @ model.C.T + model.R)
    try:
        cf = cho_factor(S, lower=True)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"innovation covariance not SPD: {exc}") from exc
    gain = cho_solve(cf, model.C @ P_pred).T
    P_filt = symmetrize((np.eye(model.n) - gain @ model.C) @ P_pred)
    return gain, P_filt


def kalman_step(
    state: SensorFilterState,
    z: np.ndarray,
    model: SystemModel,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> SensorFilterState:
    """One predict/update cycle, consuming the measurement at k + 1."""
    z = np.asarray(z, dtype=float)
    if z.shape != (model.m,):
        raise ValueError(f"measurement shape {z.shape}, expected ({model.m},)")
    x_pred = model.A @ state.x_filt
    P_pred = symmetrize(model.A @ state.P_filt @ model.A.T + model.process_noise_cov())
    gain, P_filt = _update_gain(P_pred, model)
    eps = z - model.C @ x_pred
    return SensorFilterState(
        k=state.k + 1,
        x_pred=x_pred,
        P_pred=P_pred,
        x_filt=x_pred + gain @ eps,
        P_filt=P_filt,
        gain=gain,
    )


def innovation(state: SensorFilterState, z: np.ndarray, model: SystemModel) -> np.ndarray:
    """Measurement residual z - C x_pred for the state's time index."""
    z = np.asarray(z, dtype=float)
    return z - model.C @ state.x_pred


def steady_state(
    model: SystemModel,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> SteadyState:
    """Iterate the covariance recursions from P0 until they settle.

    Requires (A, B) stabilizable and (A, C) detectable, which
    ``validate_model`` enforces; under those the iteration converges
    for any PSD P0.
    """
    P = model.P0.copy()
    eps = tol.convergence_eps
    N = 0
    for k in range(1, tol.max_iters + 1):
        P_pred = symmetrize(model.A @ P @ model.A.T + model.process_noise_cov())
        gain, P_filt = _update_gain(P_pred, model)
        if np.linalg.norm(P_filt - P, "fro") <= eps * (1 + np.linalg.norm(P_filt, "fro")):
            # k == 1 means P0 was already the fixed point.
            N = 0 if k == 1 else k
            # One more full cycle so the returned triple is mutually
            # consistent to solver precision.
            P_minus = symmetrize(model.A @ P_filt @ model.A.T + model.process_noise_cov())
            gain, P_plus = _update_gain(P_minus, model)
            return SteadyState(P_minus=P_minus, P_plus=P_plus, gain=gain, N=N)
        P = P_filt
    raise NumericalFailure("covariance iteration did not settle within max_iters")


def sensor_covariance_sequences(
    model: SystemModel,
    horizon: int,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Measurement-independent filter covariances for k = 1..horizon.

    Returns stacked predicted covariances, filtered covariances, and
    gains, each indexed by k - 1. These are public quantities: anyone
    who knows the model can reproduce them.
    """
    n, m = model.n, model.m
    P_pred_seq = np.empty((horizon, n, n))
    P_filt_seq = np.empty((horizon, n, n))
    gain_seq = np.empty((horizon, n, m))
    P = model.P0.copy()
    for k in range(horizon):
        P_pred = symmetrize(model.A @ P @ model.A.T + model.process_noise_cov())
        gain, P = _update_gain(P_pred, model)
        P_pred_seq[k] = P_pred
        P_filt_seq[k] = P
        gain_seq[k] = gain
    return P_pred_seq, P_filt_seq, gain_seq
