"""Analysis and synthesis of encryption parameters.

Covers four questions. What does the eavesdropper's expected error look
like under a randomized schedule, and where does it settle? Where does
it settle under a periodic schedule? Does a given partition make the
eavesdropper's error grow without bound? And which partition and rate
are best under a budget, for stable plants (maximize the settled error)
or unstable ones (guarantee divergence)?
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.linalg import eigh, null_space

from .crypto import EncryptionPartition, make_partition
from .eavesdropper import covariance_reduction
from .exceptions import (
    ConfigError,
    ModelInconsistencyError,
    NotApplicableError,
    UnstableOperatorError,
)
from .model import SystemModel, sensor_covariance_sequences, steady_state
from .numerics import (
    DEFAULT_TOLERANCES,
    Tolerances,
    rank_tol,
    solve_dlyap,
    spectral_radius,
    symmetrize,
)

__all__ = [
    "DesignBudget",
    "OptimalParams",
    "UnstableDesign",
    "BoundednessVerdict",
    "SingleStrategyVerdict",
    "RoundingModel",
    "steady_reductions",
    "stochastic_expected_covariance",
    "periodic_limit",
    "boundedness_check",
    "design_stable_stochastic",
    "design_stable_deterministic",
    "design_unstable",
    "partition_from_optimal",
    "partition_from_unstable",
    "single_strategy_check",
    "rounding_error_covariance",
]

# Spectral radii within this band of 1 are treated as marginally stable.
_RHO_BAND = 1e-9


@dataclass(frozen=True)
class DesignBudget:
    """Constraints for the stable-plant designs.

    ``rate_budget`` bounds the average number of encrypted rows per
    step (rows times encryption frequency); ``row_budget`` bounds the
    rows encrypted in any single step.
    """

    rate_budget: float
    row_budget: int

    def __post_init__(self):
        if self.rate_budget <= 0:
            raise ConfigError(f"rate budget must be positive, got {self.rate_budget}")
        if self.row_budget < 1:
            raise ConfigError(f"row budget must be >= 1, got {self.row_budget}")


@dataclass(frozen=True)
class OptimalParams:
    """Winning stable-plant design.

    ``S`` holds the clear rows (generalized eigenvectors with the
    smallest scores), ``S_bar`` the encrypted rows completing the
    partition, ``weight`` the observability-type weight matrix used to
    score directions, and ``objective`` the settled eavesdropper error
    trace the design achieves.
    """

    m_bar: int
    frequency: float
    S: np.ndarray
    S_bar: np.ndarray
    weight: np.ndarray
    objective: float


@dataclass(frozen=True)
class UnstableDesign:
    """Partition guaranteeing unbounded eavesdropper error.

    The encrypted row is aligned with the steady gain as seen by an
    unstable mode's left eigenvector, which couples every clear-side
    update to the diverging mode.
    """

    eigenvalue: complex
    left_eigvec: np.ndarray
    S_bar: np.ndarray
    S: np.ndarray


@dataclass(frozen=True)
class BoundednessVerdict:
    """Outcome of iterating the encrypted-steps covariance recursion.

    ``verdict`` is 'converged', 'diverged', or 'inconclusive';
    ``limit`` holds the fixed point when converged; ``witness_trace``
    the final trace examined.
    """

    verdict: str
    steps: int
    witness_trace: float
    limit: np.ndarray | None


@dataclass(frozen=True)
class SingleStrategyVerdict:
    """Effect of encrypting exactly one step.

    ``case`` classifies the plant ('stable', 'marginal', 'unstable');
    ``unbounded`` says whether the eavesdropper's extra error grows
    without bound: 'yes', 'no', or 'inconclusive'.
    """

    case: str
    unbounded: str
    spectral_radius: float


@dataclass(frozen=True)
class RoundingModel:
    """Propagation of quantization error through the user's filter.

    ``traces`` holds the error covariance trace at each step; ``limit``
    the closed-form limit matrix when the plant is stable, else None.
    """

    Theta: np.ndarray
    traces: np.ndarray
    limit: np.ndarray | None


def steady_reductions(
    part: EncryptionPartition,
    model: SystemModel,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> tuple[np.ndarray, np.ndarray]:
    """Steady-state information content of (full innovation, clear rows)."""
    ss = steady_state(model, tol)
    red_clear = covariance_reduction(np.eye(model.m), ss.P_minus, model.C, model.R, tol)
    red_enc = covariance_reduction(part.S, ss.P_minus, model.C, model.R, tol)
    return red_clear, red_enc


def stochastic_expected_covariance(
    rate: float,
    part: EncryptionPartition,
    model: SystemModel,
    horizon: int,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> tuple[np.ndarray, np.ndarray | None]:
    """Expected eavesdropper covariance under coin-flip encryption.

    Returns the exact expectation at k = 1..horizon and, for stable
    plants, its limit. The expectation mixes the sensor's filtered
    covariance (weight 1 - rate) with an auxiliary recursion that only
    ever sees the clear rows (weight rate).

    A rate of zero is rejected: with no encryption the eavesdropper is
    just another user and the plain filter limit answers the question.
    """
    if not 0.0 < rate <= 1.0:
        raise ConfigError(f"rate must lie in (0, 1], got {rate}")
    if horizon < 1:
        raise ConfigError(f"horizon must be >= 1, got {horizon}")
    n = model.n
    P_pred_seq, P_filt_seq, _ = sensor_covariance_sequences(model, horizon, tol)
    BQB = model.process_noise_cov()
    seq = np.empty((horizon, n, n))
    aux = model.P0.copy()
    for k in range(horizon):
        red_enc = covariance_reduction(part.S, P_pred_seq[k], model.C, model.R, tol)
        aux = symmetrize(model.A @ aux @ model.A.T + BQB - red_enc)
        seq[k] = (1.0 - rate) * P_filt_seq[k] + rate * aux
    limit = None
    if spectral_radius(model.A) < 1.0 - _RHO_BAND:
        ss = steady_state(model, tol)
        red_enc = covariance_reduction(part.S, ss.P_minus, model.C, model.R, tol)
        aux_limit = solve_dlyap(model.A, BQB - red_enc, tol)
        limit = symmetrize((1.0 - rate) * ss.P_plus + rate * aux_limit)
    return seq, limit


def periodic_limit(
    part: EncryptionPartition,
    pattern: tuple[int, ...],
    phase: int,
    model: SystemModel,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> np.ndarray:
    """Settled eavesdropper covariance on one phase of a periodic schedule.

    For a pattern of period L, the covariance subsequence at steps
    k = phase (mod L) converges to the value returned here. Requires a
    stable plant and at least one encrypted step per period.
    """
    pattern = tuple(int(b) for b in pattern)
    L = len(pattern)
    if L < 1 or any(b not in (0, 1) for b in pattern):
        raise ConfigError("pattern must be a nonempty 0/1 tuple")
    if sum(pattern) < 1:
        raise ConfigError("pattern must encrypt at least one step per period")
    rho = spectral_radius(model.A)
    if rho >= 1.0 - _RHO_BAND:
        raise UnstableOperatorError(
            f"periodic limit needs spectral radius < 1, got {rho:.6g}"
        )
    ss = steady_state(model, tol)
    red_clear = covariance_reduction(np.eye(model.m), ss.P_minus, model.C, model.R, tol)
    red_enc = covariance_reduction(part.S, ss.P_minus, model.C, model.R, tol)
    gap = red_clear - red_enc
    phase = phase % L
    A_L = np.linalg.matrix_power(model.A, L)
    forcing = np.zeros((model.n, model.n))
    for i in range(1, L + 1):
        if pattern[(i + phase - 1) % L]:
            Ai = np.linalg.matrix_power(model.A, L - i)
            forcing += Ai @ gap @ Ai.T
    extra = solve_dlyap(A_L, symmetrize(forcing), tol)
    return symmetrize(ss.P_plus + extra)


def boundedness_check(
    part: EncryptionPartition,
    model: SystemModel,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> BoundednessVerdict:
    """Iterate the always-encrypted covariance recursion to a verdict.

    Starting from the sensor's settled filtered covariance, each step
    applies the dynamics and subtracts only the clear rows' information.
    The sequence is monotone nondecreasing; it either settles
    (converged), blows past divergence_cap times the starting trace
    (diverged), or exhausts the iteration budget (inconclusive).
    """
    ss = steady_state(model, tol)
    red_enc = covariance_reduction(part.S, ss.P_minus, model.C, model.R, tol)
    BQB = model.process_noise_cov()
    cap = tol.divergence_cap * np.trace(ss.P_plus)
    X = ss.P_plus.copy()
    for k in range(1, tol.max_iters + 1):
        X_next = symmetrize(model.A @ X @ model.A.T + BQB - red_enc)
        t = float(np.trace(X_next))
        if not np.isfinite(t) or t > cap:
            return BoundednessVerdict(
                verdict="diverged", steps=k, witness_trace=t, limit=None
            )
        if np.linalg.norm(X_next - X, "fro") <= tol.convergence_eps * (
            1 + np.linalg.norm(X_next, "fro")
        ):
            return BoundednessVerdict(
                verdict="converged", steps=k, witness_trace=t, limit=X_next
            )
        X = X_next
    return BoundednessVerdict(
        verdict="inconclusive",
        steps=tol.max_iters,
        witness_trace=float(np.trace(X)),
        limit=None,
    )


def _fix_sign(vectors: np.ndarray) -> np.ndarray:
    """Flip columns so the first non-negligible entry is positive."""
    out = vectors.copy()
    for j in range(out.shape[1]):
        col = out[:, j]
        nz = np.flatnonzero(np.abs(col) > 1e-12 * max(1.0, np.abs(col).max()))
        if nz.size and col[nz[0]] < 0:
            out[:, j] = -col
    return out


def _scored_directions(model: SystemModel, tol: Tolerances):
    """Generalized eigenpairs ranking innovation directions by leverage.

    Directions are scored by how much settled eavesdropper error their
    removal creates, via the pencil (C P W P C^T, C P C^T + R) with P
    the predicted covariance limit and W the dynamics' weight matrix
    solving W = A^T W A + I.
    """
    ss = steady_state(model, tol)
    W = solve_dlyap(model.A.T, np.eye(model.n), tol)
    G = symmetrize(model.C @ ss.P_minus @ W @ ss.P_minus @ model.C.T)
    H = symmetrize(model.C @ ss.P_minus @ model.C.T + model.R)
    scores, vectors = eigh(G, H)
    return scores, _fix_sign(vectors), (ss, W)


def _best_row_count(
    budget: DesignBudget,
    model: SystemModel,
    rate_of,
    tol: Tolerances,
) -> OptimalParams:
    """Search over encrypted-row counts, maximizing the settled trace."""
    rho = spectral_radius(model.A)
    if rho >= 1.0 - _RHO_BAND:
        raise UnstableOperatorError(
            f"stable-plant design needs spectral radius < 1, got {rho:.6g}"
        )
    m = model.m
    if budget.row_budget > m:
        raise ConfigError(
            f"row budget {budget.row_budget} exceeds innovation dimension {m}"
        )
    _scores, vectors, (ss, W) = _scored_directions(model, tol)
    BQB = model.process_noise_cov()
    best = None
    for a in range(1, budget.row_budget + 1):
        rate = rate_of(a)
        S = vectors[:, : m - a].T.copy()
        red_enc = covariance_reduction(S, ss.P_minus, model.C, model.R, tol)
        settled = solve_dlyap(model.A, BQB - red_enc, tol)
        objective = float(np.trace((1.0 - rate) * ss.P_plus + rate * settled))
        if best is None or objective > best.objective:
            best = OptimalParams(
                m_bar=a,
                frequency=rate,
                S=S,
                S_bar=vectors[:, m - a :].T.copy(),
                weight=W,
                objective=objective,
            )
    return best


def design_stable_stochastic(
    budget: DesignBudget,
    model: SystemModel,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> OptimalParams:
    """Best partition and coin-flip rate for a stable plant.

    Encrypting a rows allows rate min(rate_budget / a, 1); the search
    keeps whichever row count maximizes the settled expected error
    trace, preferring fewer rows on ties.
    """
    return _best_row_count(
        budget, model, lambda a: min(budget.rate_budget / a, 1.0), tol
    )


def _realize_frequency(rate: float) -> tuple[int, ...]:
    """Periodic 0/1 pattern whose duty cycle equals the rate."""
    frac = Fraction(rate).limit_denominator(10**6)
    if frac <= 0:
        raise ConfigError(f"cannot realize frequency {rate} as a periodic pattern")
    if frac >= 1:
        return (1,)
    L, p = frac.denominator, frac.numerator
    pattern = [0] * L
    for i in range(p):
        pattern[(i * L) // p] = 1
    return tuple(pattern)


def design_stable_deterministic(
    budget: DesignBudget,
    model: SystemModel,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> tuple[OptimalParams, tuple[int, ...]]:
    """Best partition and periodic pattern for a stable plant.

    Identical search to the stochastic case (phase-averaged settled
    error equals the coin-flip settled error at the same rate), plus a
    realization of the winning frequency as evenly spaced encrypted
    slots in one period.
    """
    params = _best_row_count(
        budget, model, lambda a: min(budget.rate_budget / a, 1.0), tol
    )
    pattern = _realize_frequency(params.frequency)
    realized = sum(pattern) / len(pattern)
    if abs(realized - params.frequency) > 1e-9:
        # Re-score at the realizable duty cycle so the reported
        # objective matches the pattern actually returned.
        scores_rate = realized
        ss = steady_state(model, tol)
        red_enc = covariance_reduction(params.S, ss.P_minus, model.C, model.R, tol)
        settled = solve_dlyap(model.A, model.process_noise_cov() - red_enc, tol)
        objective = float(
            np.trace((1.0 - scores_rate) * ss.P_plus + scores_rate * settled)
        )
        params = OptimalParams(
            m_bar=params.m_bar,
            frequency=realized,
            S=params.S,
            S_bar=params.S_bar,
            weight=params.weight,
            objective=objective,
        )
    return params, pattern


def design_unstable(
    model: SystemModel,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> UnstableDesign:
    """Single encrypted row that forces unbounded eavesdropper error.

    Takes a left eigenvector of an unstable mode, pushes it through the
    steady gain, and encrypts the resulting innovation direction; the
    clear rows are an orthonormal basis of its complement. Requires an
    unstable plant.
    """
    rho = spectral_radius(model.A)
    if rho < 1.0 - _RHO_BAND:
        raise NotApplicableError(
            f"unstable-plant design needs spectral radius >= 1, got {rho:.6g}"
        )
    ss = steady_state(model, tol)
    eigvals, eigvecs = np.linalg.eig(model.A.T)
    idx = int(np.argmax(np.abs(eigvals)))
    lam = complex(eigvals[idx])
    w = eigvecs[:, idx]
    row = np.conj(w) @ ss.gain
    v = np.real(row)
    scale = max(1.0, float(np.linalg.norm(row)))
    if np.linalg.norm(v) <= 1e-12 * scale:
        v = np.imag(row)
    if np.linalg.norm(v) <= 1e-12 * scale:
        raise ModelInconsistencyError(
            "unstable mode is invisible through the steady gain; "
            "a validated (stabilizable, detectable) model cannot do this"
        )
    S_bar = (v / np.linalg.norm(v))[None, :]
    S = null_space(S_bar).T
    return UnstableDesign(eigenvalue=lam, left_eigvec=w, S_bar=S_bar, S=S)


def partition_from_optimal(params: OptimalParams) -> EncryptionPartition:
    """Materialize the stable design as an encryption partition."""
    return make_partition(params.S_bar, params.S if params.S.shape[0] else None)


def partition_from_unstable(design: UnstableDesign) -> EncryptionPartition:
    """Materialize the unstable design as an encryption partition."""
    return make_partition(design.S_bar, design.S if design.S.shape[0] else None)


def _unit_eig_block_sizes_ok(A: np.ndarray, tol: Tolerances) -> bool:
    """True when every near-unit eigenvalue has full geometric multiplicity."""
    n = A.shape[0]
    eigvals = np.linalg.eigvals(A)
    unit = eigvals[np.abs(np.abs(eigvals) - 1.0) <= 1e-6]
    cluster_tol = np.sqrt(np.finfo(float).eps) * max(1.0, np.linalg.norm(A, 2))
    seen: list[complex] = []
    for lam in unit:
        if any(abs(lam - s) <= cluster_tol for s in seen):
            continue
        seen.append(complex(lam))
        algebraic = int(np.sum(np.abs(eigvals - lam) <= cluster_tol))
        geometric = n - rank_tol(lam * np.eye(n) - A, tol)
        if geometric < algebraic:
            return False
    return True


def single_strategy_check(
    delta: int,
    model: SystemModel,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> SingleStrategyVerdict:
    """Can hiding a single step's innovation hurt the eavesdropper forever?

    The extra error committed at step delta propagates through the
    open-loop dynamics. Stable plants forget it. On the unit circle it
    stays bounded when every unit eigenvalue is diagonalizable (else
    undetermined here). For unstable plants the answer is yes exactly
    when no unstable left eigendirection is blind to the hidden
    innovation, checked by a rank test on each unstable eigenvalue.
    """
    if delta < 1:
        raise ConfigError(f"delta must be >= 1, got {delta}")
    rho = spectral_radius(model.A)
    if rho < 1.0 - _RHO_BAND:
        return SingleStrategyVerdict(case="stable", unbounded="no", spectral_radius=rho)
    if rho <= 1.0 + _RHO_BAND:
        bounded = _unit_eig_block_sizes_ok(model.A, tol)
        return SingleStrategyVerdict(
            case="marginal",
            unbounded="no" if bounded else "inconclusive",
            spectral_radius=rho,
        )
    P_pred_seq, _, _ = sensor_covariance_sequences(model, delta, tol)
    H = model.C @ P_pred_seq[delta - 1]
    n = model.n
    for lam in np.linalg.eigvals(model.A):
        if abs(lam) <= 1.0 + _RHO_BAND:
            continue
        stacked = np.vstack([lam * np.eye(n) - model.A.T, H])
        if rank_tol(stacked, tol) < n:
            return SingleStrategyVerdict(
                case="unstable", unbounded="inconclusive", spectral_radius=rho
            )
    return SingleStrategyVerdict(case="unstable", unbounded="yes", spectral_radius=rho)


def rounding_error_covariance(
    Theta: np.ndarray,
    model: SystemModel,
    horizon: int,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> RoundingModel:
    """Error injected when transmitted innovations are quantized.

    Models the quantization residue as white noise shaped by ``Theta``
    entering through the user filter's gain, and propagates its
    covariance; for stable plants also returns the closed-form limit.
    """
    Theta = np.asarray(Theta, dtype=float)
    if Theta.shape != (model.m, model.m):
        raise ConfigError(
            f"Theta must be {(model.m, model.m)}, got {Theta.shape}"
        )
    if horizon < 1:
        raise ConfigError(f"horizon must be >= 1, got {horizon}")
    P_pred_seq, _, gain_seq = sensor_covariance_sequences(model, horizon, tol)
    E = np.zeros((model.n, model.n))
    traces = np.empty(horizon)
    for k in range(horizon):
        innov_cov = symmetrize(model.C @ P_pred_seq[k] @ model.C.T + model.R)
        shaped = gain_seq[k] @ Theta
        E = symmetrize(model.A @ E @ model.A.T + shaped @ innov_cov @ shaped.T)
        traces[k] = np.trace(E)
    limit = None
    if spectral_radius(model.A) < 1.0 - _RHO_BAND:
        ss = steady_state(model, tol)
        innov_cov = symmetrize(model.C @ ss.P_minus @ model.C.T + model.R)
        shaped = ss.gain @ Theta
        limit = solve_dlyap(model.A, symmetrize(shaped @ innov_cov @ shaped.T), tol)
    return RoundingModel(Theta=Theta, traces=traces, limit=limit)
