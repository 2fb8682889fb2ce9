"""State estimation under intermittent innovation encryption.

A sensor runs a Kalman filter and transmits innovations; selected steps
are partially encrypted with a shared key. The legitimate user decrypts
and matches the sensor exactly, while an eavesdropper without the key
is left with an exactly computable, and by design much larger or even
unbounded, estimation error. The package provides the filters, the
eavesdropper's exact error analysis, encryption-parameter synthesis,
and a Monte Carlo harness with a CLI.
"""
from .crypto import (
    ChannelMessage,
    CipherKey,
    EncryptionPartition,
    build_message,
    decrypt,
    eavesdropper_view,
    encrypt,
    make_partition,
)
from .design import (
    BoundednessVerdict,
    DesignBudget,
    OptimalParams,
    RoundingModel,
    SingleStrategyVerdict,
    UnstableDesign,
    boundedness_check,
    design_stable_deterministic,
    design_stable_stochastic,
    design_unstable,
    partition_from_optimal,
    partition_from_unstable,
    periodic_limit,
    rounding_error_covariance,
    single_strategy_check,
    steady_reductions,
    stochastic_expected_covariance,
)
from .eavesdropper import (
    EavesdropperState,
    covariance_reduction,
    covariance_trajectory,
    eavesdropper_step,
    initial_eavesdropper_state,
    mean_covariance_over_schedules,
)
from .exceptions import (
    ConditioningWarning,
    ConfigError,
    CovertKalmanError,
    MalformedMessageError,
    ModelInconsistencyError,
    ModelValidationError,
    NotApplicableError,
    NumericalFailure,
    PartitionError,
    UnstableOperatorError,
)
from .harness import (
    AggregateMSE,
    ScenarioConfig,
    TrialResult,
    export_results,
    mass_spring_scenario,
    monte_carlo,
    run_closed_loop,
)
from .model import (
    SensorFilterState,
    SteadyState,
    SystemModel,
    initial_sensor_state,
    innovation,
    kalman_step,
    sensor_covariance_sequences,
    steady_state,
    validate_model,
)
from .numerics import (
    DEFAULT_TOLERANCES,
    Tolerances,
    iterate_lyap,
    rank_tol,
    solve_dlyap,
    spectral_radius,
    symmetrize,
    zoh_discretize,
)
from .schedule import (
    DeterministicStrategy,
    ScheduleTrace,
    SingleStepStrategy,
    StochasticStrategy,
    generate_schedule,
)

__version__ = "0.1.0"

__all__ = [
    "AggregateMSE",
    "BoundednessVerdict",
    "ChannelMessage",
    "CipherKey",
    "ConditioningWarning",
    "ConfigError",
    "CovertKalmanError",
    "DEFAULT_TOLERANCES",
    "DesignBudget",
    "DeterministicStrategy",
    "EavesdropperState",
    "EncryptionPartition",
    "MalformedMessageError",
    "ModelInconsistencyError",
    "ModelValidationError",
    "NotApplicableError",
    "NumericalFailure",
    "OptimalParams",
    "PartitionError",
    "RoundingModel",
    "ScenarioConfig",
    "ScheduleTrace",
    "SensorFilterState",
    "SingleStepStrategy",
    "SingleStrategyVerdict",
    "SteadyState",
    "StochasticStrategy",
    "SystemModel",
    "Tolerances",
    "TrialResult",
    "UnstableDesign",
    "UnstableOperatorError",
    "boundedness_check",
    "build_message",
    "covariance_reduction",
    "covariance_trajectory",
    "decrypt",
    "design_stable_deterministic",
    "design_stable_stochastic",
    "design_unstable",
    "eavesdropper_step",
    "eavesdropper_view",
    "encrypt",
    "export_results",
    "generate_schedule",
    "initial_eavesdropper_state",
    "initial_sensor_state",
    "innovation",
    "iterate_lyap",
    "kalman_step",
    "make_partition",
    "mass_spring_scenario",
    "mean_covariance_over_schedules",
    "monte_carlo",
    "partition_from_optimal",
    "partition_from_unstable",
    "periodic_limit",
    "rank_tol",
    "rounding_error_covariance",
    "run_closed_loop",
    "sensor_covariance_sequences",
    "single_strategy_check",
    "solve_dlyap",
    "spectral_radius",
    "steady_reductions",
    "steady_state",
    "stochastic_expected_covariance",
    "symmetrize",
    "validate_model",
    "zoh_discretize",
]
