"""Exact minimum-mean-square-error filter of an intercepting party.

The eavesdropper knows the model and the partition but not the key, so
on encrypted steps it can use only the clear rows of the innovation.
Its conditional-mean update applies a gain built from the sensor's
predicted covariance (public, measurement-independent), and its error
covariance evolves by subtracting, each step, the information content
of whatever payload was readable.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .crypto import EncryptionPartition
from .exceptions import MalformedMessageError, NumericalFailure
from .model import SystemModel, sensor_covariance_sequences
from .numerics import DEFAULT_TOLERANCES, Tolerances, symmetrize
from .schedule import ScheduleTrace

__all__ = [
    "EavesdropperState",
    "ReducedInnovationModel",
    "reduced_innovation_model",
    "covariance_reduction",
    "initial_eavesdropper_state",
    "eavesdropper_step",
    "covariance_trajectory",
    "mean_covariance_over_schedules",
]


@dataclass
class EavesdropperState:
    """Intercepting filter state after absorbing the message at ``k``."""

    k: int
    x: np.ndarray
    P: np.ndarray


@dataclass(frozen=True)
class ReducedInnovationModel:
    """Observation model of the clear rows: C_S = S C, R_S = S R S^T.

    Under full encryption both blocks are empty and the clear rows
    carry no information.
    """

    C_S: np.ndarray
    R_S: np.ndarray


def reduced_innovation_model(
    S: np.ndarray, C: np.ndarray, R: np.ndarray
) -> ReducedInnovationModel:
    """Compose the clear-row observation model for a selector ``S``."""
    S = np.atleast_2d(np.asarray(S, dtype=float))
    return ReducedInnovationModel(C_S=S @ C, R_S=S @ R @ S.T)


def covariance_reduction(
    S: np.ndarray,
    P_pred: np.ndarray,
    C: np.ndarray,
    R: np.ndarray,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> np.ndarray:
    """Information gained from observing S times the innovation.

    Returns P C_S^T (C_S P C_S^T + R_S)^{-1} C_S P, the amount by which
    a conditional covariance shrinks when the rows selected by ``S``
    become available. Pass the identity to score the full innovation; a
    zero-row selector returns the zero matrix (nothing was readable).
    """
    S = np.atleast_2d(np.asarray(S, dtype=float))
    n = P_pred.shape[0]
    if S.shape[0] == 0:
        return np.zeros((n, n))
    red = reduced_innovation_model(S, C, R)
    G = symmetrize(red.C_S @ P_pred @ red.C_S.T + red.R_S)
    try:
        cf = cho_factor(G, lower=True)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(
            f"clear-row innovation covariance not SPD: {exc}"
        ) from exc
    half = red.C_S @ P_pred
    return symmetrize(half.T @ cho_solve(cf, half))


def initial_eavesdropper_state(model: SystemModel) -> EavesdropperState:
    """State at k = 0: same prior as every other observer of the model."""
    return EavesdropperState(k=0, x=model.x0_mean.copy(), P=model.P0.copy())


def eavesdropper_step(
    state: EavesdropperState,
    varsigma: int,
    y: np.ndarray | None,
    sensor_pred_cov: np.ndarray,
    model: SystemModel,
    part: EncryptionPartition,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> EavesdropperState:
    """Advance the intercepting filter by one step.

    Parameters
    ----------
    varsigma, y
        Flag and readable payload from ``eavesdropper_view``: the full
        innovation when the step was clear, the clear rows when it was
        partially encrypted, None when fully encrypted.
    sensor_pred_cov
        The sensor filter's predicted covariance at this step. It is
        measurement-independent, hence reproducible by anyone who knows
        the model, and it (not the eavesdropper's own covariance) is
        what the exact conditional-mean gain is built from.
    """
    A, C, R = model.A, model.C, model.R
    x_prior = A @ state.x
    P_prior = symmetrize(A @ state.P @ A.T + model.process_noise_cov())
    if varsigma == 0:
        if y is None or np.asarray(y).shape != (model.m,):
            raise MalformedMessageError("clear step needs the full innovation")
        selector = np.eye(model.m)
    elif varsigma == 1:
        if part.full_encryption:
            if y is not None and np.asarray(y).size:
                raise MalformedMessageError(
                    "fully encrypted step carries no readable payload"
                )
            return EavesdropperState(k=state.k + 1, x=x_prior, P=P_prior)
        if y is None or np.asarray(y).shape != (model.m - part.m_bar,):
            raise MalformedMessageError(
                "partially encrypted step needs the clear rows"
            )
        selector = part.S
    else:
        raise MalformedMessageError(f"flag must be 0 or 1, got {varsigma}")
    red = reduced_innovation_model(selector, C, R)
    G = symmetrize(red.C_S @ sensor_pred_cov @ red.C_S.T + red.R_S)
    try:
        cf = cho_factor(G, lower=True)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(
            f"readable-payload covariance not SPD: {exc}"
        ) from exc
    gain = cho_solve(cf, red.C_S @ sensor_pred_cov).T
    x = x_prior + gain @ np.asarray(y, dtype=float)
    P = symmetrize(
        P_prior - covariance_reduction(selector, sensor_pred_cov, C, R, tol)
    )
    return EavesdropperState(k=state.k + 1, x=x, P=P)


def covariance_trajectory(
    trace: ScheduleTrace,
    part: EncryptionPartition,
    model: SystemModel,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> np.ndarray:
    """Eavesdropper error covariance at k = 1..horizon for one schedule.

    Deterministic given the schedule: the covariance recursion never
    touches data, only which payloads were readable at each step.
    """
    T = trace.horizon
    n = model.n
    P_pred_seq, _, _ = sensor_covariance_sequences(model, T, tol)
    BQB = model.process_noise_cov()
    eye_m = np.eye(model.m)
    out = np.empty((T, n, n))
    P = model.P0.copy()
    for k in range(T):
        P_prior = symmetrize(model.A @ P @ model.A.T + BQB)
        if trace.bits[k]:
            red = covariance_reduction(part.S, P_pred_seq[k], model.C, model.R, tol)
        else:
            red = covariance_reduction(eye_m, P_pred_seq[k], model.C, model.R, tol)
        P = symmetrize(P_prior - red)
        out[k] = P
    return out


def mean_covariance_over_schedules(
    bits: np.ndarray,
    part: EncryptionPartition,
    model: SystemModel,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> np.ndarray:
    """Average the exact covariance recursion over many schedules at once.

    ``bits`` has one row per schedule, one column per step. All
    recursions share the same two per-step reduction terms, so the
    stack advances with batched matrix products.
    """
    bits = np.asarray(bits, dtype=float)
    if bits.ndim != 2:
        raise ValueError("bits must be (num_schedules, horizon)")
    num, T = bits.shape
    n = model.n
    P_pred_seq, _, _ = sensor_covariance_sequences(model, T, tol)
    BQB = model.process_noise_cov()
    eye_m = np.eye(model.m)
    P = np.broadcast_to(model.P0, (num, n, n)).copy()
    out = np.empty((T, n, n))
    for k in range(T):
        red_clear = covariance_reduction(eye_m, P_pred_seq[k], model.C, model.R, tol)
        red_enc = covariance_reduction(part.S, P_pred_seq[k], model.C, model.R, tol)
        P_prior = np.einsum("ij,sjl,kl->sik", model.A, P, model.A) + BQB
        b = bits[:, k][:, None, None]
        P = P_prior - b * red_enc - (1.0 - b) * red_clear
        P = (P + np.transpose(P, (0, 2, 1))) / 2.0
        out[k] = P.mean(axis=0)
    return out
