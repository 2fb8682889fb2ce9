"""Encryption scheduling strategies and realized schedules.

A strategy decides, for each step k >= 1, whether the innovation is
encrypted (flag 1) or sent in the clear (flag 0). Three families are
supported: independent coin flips at a fixed rate, a periodic pattern,
and a single encrypted step.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .exceptions import ConfigError

__all__ = [
    "StochasticStrategy",
    "DeterministicStrategy",
    "SingleStepStrategy",
    "Strategy",
    "ScheduleTrace",
    "gen_stochastic",
    "gen_deterministic",
    "gen_single",
    "generate_schedule",
]


@dataclass(frozen=True)
class StochasticStrategy:
    """Encrypt each step independently with probability ``rate``."""

    rate: float

    def __post_init__(self):
        if not 0.0 <= self.rate <= 1.0:
            raise ConfigError(f"encryption rate must lie in [0, 1], got {self.rate}")


@dataclass(frozen=True)
class DeterministicStrategy:
    """Repeat a fixed 0/1 pattern with period len(pattern)."""

    pattern: tuple[int, ...]

    def __post_init__(self):
        if len(self.pattern) < 1:
            raise ConfigError("pattern must have at least one entry")
        if any(b not in (0, 1) for b in self.pattern):
            raise ConfigError("pattern entries must be 0 or 1")
        object.__setattr__(self, "pattern", tuple(int(b) for b in self.pattern))

    @property
    def period(self) -> int:
        return len(self.pattern)

    @property
    def ones_per_period(self) -> int:
        return int(sum(self.pattern))


@dataclass(frozen=True)
class SingleStepStrategy:
    """Encrypt exactly one step, at index ``delta``."""

    delta: int

    def __post_init__(self):
        if self.delta < 1:
            raise ConfigError(f"delta must be >= 1, got {self.delta}")


Strategy = Union[StochasticStrategy, DeterministicStrategy, SingleStepStrategy]


@dataclass(frozen=True)
class ScheduleTrace:
    """Realized encryption flags for steps 1..horizon.

    ``bits[k - 1]`` is the flag at step k.
    """

    bits: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=np.uint8)
        if bits.ndim != 1 or not np.all((bits == 0) | (bits == 1)):
            raise ConfigError("schedule bits must be a 1-d 0/1 array")
        object.__setattr__(self, "bits", bits)

    @property
    def horizon(self) -> int:
        return int(self.bits.shape[0])


def gen_stochastic(rate: float, horizon: int, seed) -> ScheduleTrace:
    """Sample independent flags at the given rate from a seeded generator."""
    if not 0.0 <= rate <= 1.0:
        raise ConfigError(f"encryption rate must lie in [0, 1], got {rate}")
    rng = np.random.default_rng(seed)
    bits = (rng.random(horizon) < rate).astype(np.uint8)
    return ScheduleTrace(bits=bits, seed=seed if isinstance(seed, int) else None)


def gen_deterministic(pattern: tuple[int, ...], horizon: int) -> ScheduleTrace:
    """Tile a periodic pattern out to the horizon."""
    strat = DeterministicStrategy(tuple(pattern))
    reps = -(-horizon // strat.period)
    bits = np.tile(np.asarray(strat.pattern, dtype=np.uint8), reps)[:horizon]
    return ScheduleTrace(bits=bits)


def gen_single(delta: int, horizon: int) -> ScheduleTrace:
    """All-clear schedule except for one encrypted step at ``delta``."""
    strat = SingleStepStrategy(delta)
    bits = np.zeros(horizon, dtype=np.uint8)
    if strat.delta <= horizon:
        bits[strat.delta - 1] = 1
    return ScheduleTrace(bits=bits)


def generate_schedule(strategy: Strategy, horizon: int, seed=None) -> ScheduleTrace:
    """Realize any strategy over steps 1..horizon."""
    if horizon < 1:
        raise ConfigError(f"horizon must be >= 1, got {horizon}")
    if isinstance(strategy, StochasticStrategy):
        return gen_stochastic(strategy.rate, horizon, seed)
    if isinstance(strategy, DeterministicStrategy):
        return gen_deterministic(strategy.pattern, horizon)
    if isinstance(strategy, SingleStepStrategy):
        return gen_single(strategy.delta, horizon)
    raise ConfigError(f"unknown strategy type {type(strategy).__name__}")
