import itertools

import numpy as np
import pytest

from covert_kalman import (
    ConfigError,
    DesignBudget,
    NotApplicableError,
    SystemModel,
    UnstableOperatorError,
    boundedness_check,
    covariance_reduction,
    covariance_trajectory,
    design_stable_deterministic,
    design_stable_stochastic,
    design_unstable,
    make_partition,
    partition_from_optimal,
    partition_from_unstable,
    periodic_limit,
    rounding_error_covariance,
    single_strategy_check,
    steady_state,
    stochastic_expected_covariance,
)
from covert_kalman.design import steady_reductions
from covert_kalman.numerics import min_symmetric_eigenvalue, solve_dlyap
from covert_kalman.schedule import DeterministicStrategy, ScheduleTrace, generate_schedule


@pytest.fixture
def split_partition():
    return make_partition(np.array([[1.0, 0.0]]), np.array([[0.0, 1.0]]))


@pytest.fixture
def full_partition():
    return make_partition(np.eye(2), None)


def memoryless_model():
    """Two-state plant whose dynamics forget everything each step.

    With A = 0 the settled covariance at any step depends only on that
    step's own encryption flag, which makes periodic limits computable
    by hand.
    """
    return SystemModel(
        A=np.zeros((2, 2)),
        B=np.eye(2),
        C=np.array([[1.0, 0.3], [0.0, 1.0]]),
        Q=np.diag([1.0, 2.0]),
        R=np.diag([0.5, 0.25]),
        x0_mean=np.zeros(2),
        P0=np.eye(2),
    )


class TestStochasticExpectedCovariance:
    def test_matches_exhaustive_enumeration(self, stable_model, split_partition):
        # The expectation over coin-flip schedules is linear in the
        # per-schedule recursions, so a weighted sum over all 2^T
        # schedules is an exact independent oracle.
        T, rate = 6, 0.3
        seq, _ = stochastic_expected_covariance(
            rate, split_partition, stable_model, T
        )
        expected = np.zeros((T, 4, 4))
        for bits in itertools.product((0, 1), repeat=T):
            ones = sum(bits)
            w = rate**ones * (1 - rate) ** (T - ones)
            trace = ScheduleTrace(bits=np.array(bits, dtype=np.uint8))
            expected += w * covariance_trajectory(
                trace, split_partition, stable_model
            )
        assert np.allclose(seq, expected, atol=1e-10)

    def test_limit_is_fixed_point(self, stable_model, split_partition):
        seq, limit = stochastic_expected_covariance(
            0.25, split_partition, stable_model, 600
        )
        assert limit is not None
        assert np.allclose(seq[-1], limit, atol=1e-9)

    def test_rate_one_is_aux_recursion(self, stable_model, split_partition):
        # At rate 1 every step is encrypted: the expectation equals the
        # deterministic always-encrypted trajectory.
        T = 40
        seq, _ = stochastic_expected_covariance(1.0, split_partition, stable_model, T)
        trace = ScheduleTrace(bits=np.ones(T, dtype=np.uint8))
        traj = covariance_trajectory(trace, split_partition, stable_model)
        assert np.allclose(seq, traj, atol=1e-10)

    def test_rate_zero_rejected(self, stable_model, split_partition):
        with pytest.raises(ConfigError):
            stochastic_expected_covariance(0.0, split_partition, stable_model, 10)

    def test_no_limit_for_unstable(self, unstable_model, split_partition):
        _, limit = stochastic_expected_covariance(
            0.5, split_partition, unstable_model, 5
        )
        assert limit is None


class TestPeriodicLimit:
    def test_memoryless_oracle(self):
        # With A = 0 the limit at phase j is the settled filter value
        # plus the information gap exactly when step j is encrypted.
        model = memoryless_model()
        part = make_partition(np.array([[1.0, 0.0]]), np.array([[0.0, 1.0]]))
        ss = steady_state(model)
        red_clear, red_enc = steady_reductions(part, model)
        gap = red_clear - red_enc
        pattern = (1, 0, 0)
        for phase in range(1, 4):
            lim = periodic_limit(part, pattern, phase, model)
            expected = ss.P_plus + pattern[(phase - 1) % 3] * gap
            assert np.allclose(lim, expected, atol=1e-10)

    def test_phase_subsequence_converges(self, stable_model, split_partition):
        pattern = (1, 0, 0, 0, 0)
        T = 600
        trace = generate_schedule(DeterministicStrategy(pattern), T)
        traj = covariance_trajectory(trace, split_partition, stable_model)
        for phase in range(1, 6):
            lim = periodic_limit(split_partition, pattern, phase, stable_model)
            # Steps congruent to the phase mod 5: k = phase, phase+5, ...
            last = traj[phase - 1 :: 5][-1]
            assert np.allclose(last, lim, atol=1e-8)

    def test_all_clear_pattern_rejected(self, stable_model, split_partition):
        with pytest.raises(ConfigError):
            periodic_limit(split_partition, (0, 0), 1, stable_model)

    def test_unstable_plant_rejected(self, unstable_model, split_partition):
        with pytest.raises(UnstableOperatorError):
            periodic_limit(split_partition, (1, 0), 1, unstable_model)


class TestBoundednessCheck:
    def test_stable_converges_to_lyapunov_value(self, stable_model, split_partition):
        out = boundedness_check(split_partition, stable_model)
        assert out.verdict == "converged"
        red_clear, red_enc = steady_reductions(split_partition, stable_model)
        fixed = solve_dlyap(
            stable_model.A, stable_model.process_noise_cov() - red_enc
        )
        assert np.allclose(out.limit, fixed, atol=1e-7)
        ss = steady_state(stable_model)
        assert min_symmetric_eigenvalue(out.limit - ss.P_plus) >= -1e-10

    def test_unstable_with_aligned_row_diverges(self, unstable_model):
        design = design_unstable(unstable_model)
        part = partition_from_unstable(design)
        out = boundedness_check(part, unstable_model)
        assert out.verdict == "diverged"
        assert out.witness_trace > 0


class TestStableDesign:
    def test_acceptance_budget_picks_one_row(self, stable_model):
        params = design_stable_stochastic(DesignBudget(0.2, 2), stable_model)
        assert params.m_bar == 1
        assert params.frequency == pytest.approx(0.2, abs=1e-12)

    def test_clear_rows_normalized_in_innovation_metric(self, stable_model):
        # eigh(G, H) returns H-orthonormal vectors, so the clear-row
        # selector satisfies S H S^T = I.
        params = design_stable_stochastic(DesignBudget(0.2, 2), stable_model)
        ss = steady_state(stable_model)
        H = stable_model.C @ ss.P_minus @ stable_model.C.T + stable_model.R
        assert np.allclose(params.S @ H @ params.S.T, np.eye(params.S.shape[0]), atol=1e-9)

    def test_partition_materializes(self, stable_model):
        params = design_stable_stochastic(DesignBudget(0.2, 2), stable_model)
        part = partition_from_optimal(params)
        assert part.m_bar == params.m_bar

    def test_objective_is_settled_trace(self, stable_model):
        # Re-derive the winning objective from its own partition.
        params = design_stable_stochastic(DesignBudget(0.2, 2), stable_model)
        ss = steady_state(stable_model)
        red_enc = covariance_reduction(
            params.S, ss.P_minus, stable_model.C, stable_model.R
        )
        settled = solve_dlyap(
            stable_model.A, stable_model.process_noise_cov() - red_enc
        )
        expected = np.trace(
            (1 - params.frequency) * ss.P_plus + params.frequency * settled
        )
        assert params.objective == pytest.approx(expected, rel=1e-10)

    def test_deterministic_matches_stochastic(self, stable_model):
        sto = design_stable_stochastic(DesignBudget(0.2, 2), stable_model)
        det, pattern = design_stable_deterministic(DesignBudget(0.2, 2), stable_model)
        assert det.m_bar == sto.m_bar
        assert det.frequency == pytest.approx(sto.frequency, abs=1e-12)
        assert abs(det.objective - sto.objective) < 1e-9
        assert pattern == (1, 0, 0, 0, 0)

    def test_pattern_realizes_other_rates(self, stable_model):
        _, pattern = design_stable_deterministic(DesignBudget(0.8, 1), stable_model)
        assert pattern == (1, 1, 1, 1, 0)
        assert sum(pattern) / len(pattern) == pytest.approx(0.8)

    def test_rate_budget_capped_at_one(self, stable_model):
        params = design_stable_stochastic(DesignBudget(5.0, 1), stable_model)
        assert params.frequency == 1.0

    def test_row_budget_beyond_innovation_rejected(self, stable_model):
        with pytest.raises(ConfigError):
            design_stable_stochastic(DesignBudget(0.2, 3), stable_model)

    def test_unstable_plant_rejected(self, unstable_model):
        with pytest.raises(UnstableOperatorError):
            design_stable_stochastic(DesignBudget(0.2, 2), unstable_model)

    @pytest.mark.parametrize("rate,rows", [(0.0, 1), (-1.0, 1), (0.2, 0)])
    def test_bad_budget_rejected(self, rate, rows):
        with pytest.raises(ConfigError):
            DesignBudget(rate, rows)


class TestUnstableDesign:
    def test_geometry(self, unstable_model):
        design = design_unstable(unstable_model)
        assert abs(design.eigenvalue) > 1.0
        assert np.linalg.norm(design.S_bar) == pytest.approx(1.0, rel=1e-12)
        # Clear rows span the orthogonal complement of the encrypted row.
        assert np.allclose(design.S @ design.S_bar.T, 0.0, atol=1e-12)
        assert np.allclose(design.S @ design.S.T, np.eye(1), atol=1e-12)

    def test_left_eigvec_property(self, unstable_model):
        design = design_unstable(unstable_model)
        w, lam = design.left_eigvec, design.eigenvalue
        assert np.allclose(
            unstable_model.A.T @ w, lam * w, atol=1e-9 * abs(lam)
        )

    def test_stable_plant_rejected(self, stable_model):
        with pytest.raises(NotApplicableError):
            design_unstable(stable_model)


class TestSingleStrategyCheck:
    def test_stable_case(self, stable_model):
        out = single_strategy_check(1, stable_model)
        assert out.case == "stable"
        assert out.unbounded == "no"

    def test_unstable_case(self, unstable_model):
        out = single_strategy_check(1, unstable_model)
        assert out.case == "unstable"
        assert out.unbounded == "yes"
        assert out.spectral_radius > 1.0

    def test_marginal_diagonalizable(self):
        model = SystemModel(
            A=np.eye(2),
            B=np.eye(2),
            C=np.eye(2),
            Q=np.eye(2),
            R=np.eye(2),
            x0_mean=np.zeros(2),
            P0=np.eye(2),
        )
        out = single_strategy_check(1, model)
        assert out.case == "marginal"
        assert out.unbounded == "no"

    def test_marginal_defective(self):
        model = SystemModel(
            A=np.array([[1.0, 1.0], [0.0, 1.0]]),
            B=np.eye(2),
            C=np.eye(2),
            Q=np.eye(2),
            R=np.eye(2),
            x0_mean=np.zeros(2),
            P0=np.eye(2),
        )
        out = single_strategy_check(1, model)
        assert out.case == "marginal"
        assert out.unbounded == "inconclusive"

    def test_bad_delta_rejected(self, stable_model):
        with pytest.raises(ConfigError):
            single_strategy_check(0, stable_model)


class TestRoundingErrorCovariance:
    def test_zero_granularity_is_exact(self, stable_model):
        out = rounding_error_covariance(np.zeros((2, 2)), stable_model, 20)
        assert np.allclose(out.traces, 0.0)
        assert np.allclose(out.limit, 0.0)

    def test_scalar_settled_oracle(self):
        # Start the filter at its fixed point so the gain is constant;
        # the error trace is then an exact geometric series.
        a, theta = 0.5, 0.1
        p_minus = (0.25 + np.sqrt(4.0625)) / 2.0
        gain = p_minus / (p_minus + 1.0)
        p_plus = (1 - gain) * p_minus
        model = SystemModel(
            A=[[a]], B=[[1.0]], C=[[1.0]], Q=[[1.0]], R=[[1.0]],
            x0_mean=[0.0], P0=[[p_plus]],
        )
        out = rounding_error_covariance(np.array([[theta]]), model, 50)
        s = (gain * theta) ** 2 * (p_minus + 1.0)
        expected = s * (1 - a ** (2 * np.arange(1, 51))) / (1 - a**2)
        assert np.allclose(out.traces, expected, rtol=1e-9)
        assert out.limit[0, 0] == pytest.approx(s / (1 - a**2), rel=1e-9)

    def test_trace_converges_to_limit(self, stable_model):
        out = rounding_error_covariance(1e-3 * np.eye(2), stable_model, 400)
        assert out.limit is not None
        assert abs(out.traces[-1] - np.trace(out.limit)) < 1e-10

    def test_unstable_has_no_limit(self, unstable_model):
        out = rounding_error_covariance(1e-3 * np.eye(2), unstable_model, 10)
        assert out.limit is None
        assert np.all(np.isfinite(out.traces))

    def test_bad_shape_rejected(self, stable_model):
        with pytest.raises(ConfigError):
            rounding_error_covariance(np.zeros((3, 3)), stable_model, 10)
