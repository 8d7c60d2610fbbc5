"""Time-indexed training metrics produced by one simulated run."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import NamedTuple


class MetricsRecord(NamedTuple):
    time: float
    train_loss: float
    test_loss: float
    test_accuracy: float
    update_count: int
    current_k: int


@dataclass
class MetricsSeries:
    records: list[MetricsRecord] = field(default_factory=list)
    policy: str = ""
    round: int = 0
    fingerprint: str = ""
    # diagnostics, not serialized to the series CSV
    staleness_histogram: Counter = field(default_factory=Counter)
    gradients_submitted: int = 0
    gradients_flushed: int = 0

    def __len__(self):
        return len(self.records)

    @property
    def final(self) -> MetricsRecord:
        return self.records[-1]

    @property
    def times(self) -> list[float]:
        return [r.time for r in self.records]

    def column(self, name: str) -> list:
        return [getattr(r, name) for r in self.records]

    def same_trajectory(self, other: "MetricsSeries") -> bool:
        """Bit-for-bit equality of the records, ignoring labels."""
        return self.records == other.records
