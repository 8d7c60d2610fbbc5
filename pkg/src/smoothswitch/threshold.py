"""Flush threshold schedule for the hybrid aggregation policy.

The threshold starts at ``k_initial`` and grows by one every ``step_size``
applied server updates until it reaches ``k_max`` (normally the worker
count, since a larger threshold could never be met).
"""
from __future__ import annotations

from dataclasses import dataclass

from .errors import ConfigError


@dataclass(frozen=True)
class ThresholdSchedule:
    step_size: int
    k_max: int
    k_initial: int = 1
    kind: str = "step"

    def __post_init__(self):
        if self.kind != "step":
            raise ConfigError(f"unknown schedule kind {self.kind!r}")
        if self.step_size < 1:
            raise ConfigError(f"step_size must be >= 1, got {self.step_size}")
        if not 1 <= self.k_initial <= self.k_max:
            raise ConfigError(
                f"need 1 <= k_initial <= k_max, got k_initial={self.k_initial}, k_max={self.k_max}"
            )

    @classmethod
    def constant(cls, k: int) -> "ThresholdSchedule":
        """A schedule pinned at ``k`` forever."""
        return cls(step_size=1, k_max=k, k_initial=k)

    @classmethod
    def from_lr_multiple(cls, multiple: float, lr: float, k_max: int, k_initial: int = 1):
        """Step size expressed as ``multiple / lr`` updates (3/lr = 300 at lr 0.01)."""
        return cls(step_size=max(1, round(multiple / lr)), k_max=k_max, k_initial=k_initial)


def threshold_at(schedule: ThresholdSchedule, update_count: int) -> int:
    return min(schedule.k_max, schedule.k_initial + update_count // schedule.step_size)


def should_flush(buffer_len: int, k: int) -> bool:
    return buffer_len >= k
