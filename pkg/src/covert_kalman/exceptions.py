"""Exception hierarchy shared across the package.

Two branches matter for exit-code mapping in the CLI: configuration
problems (bad user input, invalid models, malformed messages) and
numerical failures (solvers that cannot deliver a trustworthy result).
"""


class CovertKalmanError(Exception):
    """Base class for all package errors."""


class ConfigError(CovertKalmanError):
    """Invalid user-supplied configuration, mapped to CLI exit code 1."""


class ModelValidationError(ConfigError):
    """A system model violates one of its structural requirements."""


class PartitionError(ConfigError):
    """An encryption partition is dimensionally wrong or singular."""


class MalformedMessageError(ConfigError):
    """A channel message is inconsistent with its flag or partition."""


class NotApplicableError(ConfigError):
    """The requested operation does not apply to the given inputs."""


class NumericalFailure(CovertKalmanError):
    """A numeric routine could not converge or factorize, CLI exit code 2."""


class UnstableOperatorError(NumericalFailure):
    """A routine requiring a Schur-stable operator received an unstable one."""


class ModelInconsistencyError(NumericalFailure):
    """An internal consistency guarantee failed for a validated model."""


class ConditioningWarning(UserWarning):
    """A computed quantity is poorly conditioned but still usable."""
