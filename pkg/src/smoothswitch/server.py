"""Parameter server with synchronous, asynchronous and hybrid aggregation.

All three policies share one code path: every incoming gradient goes into
a buffer, and the buffer is flushed (mean of its gradients, one SGD step)
as soon as its length reaches the current threshold.  The threshold is 1
for the asynchronous policy, the worker count for the synchronous policy,
and ``threshold_at(schedule, update_count)`` for the hybrid policy.  A
worker whose gradient is buffered stays blocked until the flush, so a
buffer never holds two gradients from one worker.
"""
from __future__ import annotations

import threading
from collections import Counter
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ConfigError, NumericError
from .model import GradientVector, ParameterVector, sgd_apply
from .threshold import ThresholdSchedule, should_flush, threshold_at


class Policy(str, Enum):
    SYNCHRONOUS = "synchronous"
    ASYNCHRONOUS = "asynchronous"
    HYBRID = "hybrid"


@dataclass(frozen=True)
class AggregationPolicy:
    tag: Policy
    schedule: ThresholdSchedule | None = None
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "tag", Policy(self.tag))
        if self.tag is Policy.HYBRID and self.schedule is None:
            raise ConfigError("hybrid policy requires a threshold schedule")
        if not self.label:
            object.__setattr__(self, "label", self.tag.value)

    @classmethod
    def synchronous(cls, label=""):
        return cls(Policy.SYNCHRONOUS, None, label)

    @classmethod
    def asynchronous(cls, label=""):
        return cls(Policy.ASYNCHRONOUS, None, label)

    @classmethod
    def hybrid(cls, schedule: ThresholdSchedule, label=""):
        return cls(Policy.HYBRID, schedule, label)


@dataclass(frozen=True)
class GradientMessage:
    worker_id: int
    grad: GradientVector
    base_version: int
    sent_at: float = 0.0


@dataclass(frozen=True)
class UpdateOutcome:
    applied: bool
    new_version: int
    flushed_count: int
    current_k: int
    flushed_workers: tuple[int, ...] = ()


def aggregate(buffer: list[GradientMessage]) -> GradientVector:
    """Elementwise mean of the buffered gradients.

    Summation runs in buffer order so that results are bit-reproducible.
    """
    if not buffer:
        raise RuntimeError("aggregate called on an empty buffer")
    total = np.array(buffer[0].grad.values, dtype=np.float64)
    samples = buffer[0].grad.sample_count
    for msg in buffer[1:]:
        total += msg.grad.values
        samples += msg.grad.sample_count
    if len(buffer) > 1:
        total /= len(buffer)
    return GradientVector(total, samples)


class ParameterServer:
    """Serialized, versioned parameter store.

    ``submit_gradient`` and ``fetch_params`` are guarded by one lock, so the
    server can be driven either by the discrete-event simulator or by real
    worker threads.
    """

    def __init__(self, params: ParameterVector, policy: AggregationPolicy,
                 worker_count: int, lr: float):
        if worker_count < 1:
            raise ConfigError(f"worker_count must be >= 1, got {worker_count}")
        if lr <= 0:
            raise ConfigError(f"learning rate must be positive, got {lr}")
        if policy.schedule is not None and policy.schedule.k_max > worker_count:
            raise ConfigError(
                f"schedule k_max={policy.schedule.k_max} exceeds worker count {worker_count}; "
                "the buffer could never fill"
            )
        self.params = params
        self.policy = policy
        self.worker_count = worker_count
        self.lr = lr
        self.buffer: list[GradientMessage] = []
        self.staleness_histogram: Counter[int] = Counter()
        self.submitted = 0
        self._pending: set[int] = set()
        self._lock = threading.RLock()

    @property
    def update_count(self) -> int:
        return self.params.version

    def current_k(self) -> int:
        tag = self.policy.tag
        if tag is Policy.ASYNCHRONOUS:
            return 1
        if tag is Policy.SYNCHRONOUS:
            return self.worker_count
        return threshold_at(self.policy.schedule, self.update_count)

    def fetch_params(self) -> tuple[np.ndarray, int]:
        with self._lock:
            return self.params.values, self.params.version

    def snapshot(self) -> ParameterVector:
        """The current (immutable) parameter vector, version included."""
        with self._lock:
            return self.params

    def submit_gradient(self, msg: GradientMessage) -> UpdateOutcome:
        with self._lock:
            if len(msg.grad) != len(self.params):
                raise ConfigError(
                    f"gradient from worker {msg.worker_id} has length {len(msg.grad)}, "
                    f"expected {len(self.params)}"
                )
            if not 0 <= msg.worker_id < self.worker_count:
                raise ConfigError(f"unknown worker id {msg.worker_id}")
            if msg.worker_id in self._pending:
                raise RuntimeError(
                    f"worker {msg.worker_id} submitted again before its buffered gradient was flushed"
                )
            staleness = self.params.version - msg.base_version
            if staleness < 0:
                raise RuntimeError(
                    f"worker {msg.worker_id} claims base version {msg.base_version} "
                    f"ahead of server version {self.params.version}"
                )
            self.staleness_histogram[staleness] += 1
            self.submitted += 1

            k = self.current_k()
            self.buffer.append(msg)
            self._pending.add(msg.worker_id)
            if should_flush(len(self.buffer), k):
                return self._flush(k)
            return UpdateOutcome(False, self.params.version, 0, k)

    def force_flush(self) -> UpdateOutcome:
        """Apply whatever is buffered; used once when the time budget expires."""
        with self._lock:
            k = self.current_k()
            if not self.buffer:
                return UpdateOutcome(False, self.params.version, 0, k)
            return self._flush(k)

    def _flush(self, k: int) -> UpdateOutcome:
        buffer, self.buffer = self.buffer, []
        self._pending.clear()
        grad = aggregate(buffer)
        try:
            self.params = sgd_apply(self.params, grad, self.lr)
        except NumericError as exc:
            raise NumericError(f"{exc} after aggregating {len(buffer)} gradients") from exc
        workers = tuple(m.worker_id for m in buffer)
        return UpdateOutcome(True, self.params.version, len(buffer), k, workers)
