"""Discrete-event simulation of heterogeneous workers feeding a parameter server.

Time is virtual.  Each worker repeatedly fetches the current parameters,
draws a minibatch from its shard, spends ``base_compute_time`` plus an
optional random delay computing the gradient, and submits it.  The server
applies its aggregation policy; workers whose gradient is waiting in the
buffer stay idle until that buffer is flushed.

Randomness is split per worker and per purpose with
``hash64(rng_seed, worker_id, stream_tag)``, so one worker's draws never
depend on another worker's profile or on the aggregation policy.
"""
from __future__ import annotations

import heapq
import logging
import math
import threading
import time as wallclock
from dataclasses import dataclass, replace

import numpy as np

from ._seeding import make_rng
from .data import Dataset, DatasetSplit
from .errors import ConfigError, NumericError
from .metrics import MetricsRecord, MetricsSeries
from .model import Batch, ModelSpec, ParameterVector, evaluate, gradient, init_params
from .server import AggregationPolicy, GradientMessage, ParameterServer

log = logging.getLogger(__name__)

BATCH_STREAM = 0xBA7C
DELAY_STREAM = 0xDE1A

WORKER_READY = 0
GRADIENT_ARRIVAL = 1
EVALUATION = 2


@dataclass(frozen=True)
class WorkerProfile:
    worker_id: int
    shard: Dataset
    base_compute_time: float
    delayed: bool = False
    delay_mean: float = 0.0
    delay_std: float = 0.0

    def __post_init__(self):
        if self.base_compute_time <= 0:
            raise ConfigError(f"worker {self.worker_id}: base_compute_time must be positive")
        if self.delay_std < 0:
            raise ConfigError(f"worker {self.worker_id}: delay_std must be non-negative")
        if len(self.shard) == 0:
            raise ConfigError(f"worker {self.worker_id} has an empty shard")


@dataclass(frozen=True)
class SimConfig:
    worker_count: int
    time_budget: float
    policy: AggregationPolicy
    lr: float = 0.01
    batch_size: int = 32
    rng_seed: int = 0
    eval_interval: float | None = None

    def __post_init__(self):
        if self.worker_count < 1:
            raise ConfigError(f"worker_count must be >= 1, got {self.worker_count}")
        if self.time_budget <= 0:
            raise ConfigError(f"time_budget must be positive, got {self.time_budget}")
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.eval_interval is None:
            object.__setattr__(self, "eval_interval", self.time_budget / 50)
        if not 0 < self.eval_interval <= self.time_budget:
            raise ConfigError(
                f"eval_interval must lie in (0, time_budget], got {self.eval_interval}"
            )


def sample_delay(rng: np.random.Generator, mean: float, std: float) -> float:
    """One Normal(mean, std) draw clamped below at zero."""
    if std < 0:
        raise ConfigError(f"delay std must be non-negative, got {std}")
    return max(float(rng.normal(mean, std)), 0.0)


def make_worker_profiles(shards: list[Dataset], batch_size: int, *,
                         compute_per_sample: float = 0.001, delayed_fraction: float = 0.5,
                         delay_mean: float = 0.0, delay_std: float = 0.25) -> list[WorkerProfile]:
    """Workers ``0 .. ceil(W * delayed_fraction) - 1`` get the random extra delay."""
    n_delayed = math.ceil(len(shards) * delayed_fraction)
    return [
        WorkerProfile(
            worker_id=w,
            shard=s,
            base_compute_time=compute_per_sample * batch_size,
            delayed=w < n_delayed,
            delay_mean=delay_mean,
            delay_std=delay_std,
        )
        for w, s in enumerate(shards)
    ]


def evaluation_times(time_budget: float, eval_interval: float) -> list[float]:
    """Grid points ``k * eval_interval`` strictly below the budget, then the budget itself."""
    times = []
    k = 1
    while k * eval_interval < time_budget * (1 - 1e-12):
        times.append(k * eval_interval)
        k += 1
    times.append(float(time_budget))
    return times


def _record(t, server, spec, split) -> MetricsRecord:
    params = server.params
    train_loss, _ = evaluate(spec, params, split.train)
    test_loss, test_acc = evaluate(spec, params, split.test)
    return MetricsRecord(float(t), train_loss, test_loss, test_acc,
                         server.update_count, server.current_k())


# overflow is detected explicitly and surfaced as NumericError, so numpy's warnings are noise
@np.errstate(over="ignore", invalid="ignore")
def run_simulation(config: SimConfig, spec: ModelSpec, split: DatasetSplit,
                   profiles: list[WorkerProfile],
                   initial_params: ParameterVector | None = None,
                   trace: list | None = None) -> MetricsSeries:
    """Run one policy to the time budget and return its evaluation series.

    If ``trace`` is a list, every executed event is appended to it as a
    ``(time, kind, worker_id)`` tuple.
    """
    if len(profiles) != config.worker_count:
        raise ConfigError(f"{len(profiles)} worker profiles for worker_count={config.worker_count}")
    if sorted(p.worker_id for p in profiles) != list(range(config.worker_count)):
        raise ConfigError("worker ids must be exactly 0 .. worker_count - 1")
    profiles = sorted(profiles, key=lambda p: p.worker_id)
    if initial_params is None:
        initial_params = init_params(spec, config.rng_seed)

    server = ParameterServer(initial_params, config.policy, config.worker_count, config.lr)
    batch_rngs = [make_rng(config.rng_seed, p.worker_id, BATCH_STREAM) for p in profiles]
    delay_rngs = [make_rng(config.rng_seed, p.worker_id, DELAY_STREAM) for p in profiles]
    budget = float(config.time_budget)

    queue: list = []
    seq = 0

    def push(t, kind, worker, payload=None):
        nonlocal seq
        heapq.heappush(queue, (t, seq, kind, worker, payload))
        seq += 1

    eval_grid = evaluation_times(budget, config.eval_interval)
    for t in eval_grid[:-1]:
        push(t, EVALUATION, -1)
    for p in profiles:
        push(0.0, WORKER_READY, p.worker_id)

    series = MetricsSeries(policy=config.policy.label)
    t = 0.0
    try:
        while queue and queue[0][0] <= budget:
            t, _, kind, w, payload = heapq.heappop(queue)
            if trace is not None:
                trace.append((t, kind, w))
            if kind == WORKER_READY:
                prof = profiles[w]
                snap = server.snapshot()
                rows = batch_rngs[w].integers(0, len(prof.shard), size=config.batch_size)
                duration = prof.base_compute_time
                if prof.delayed:
                    duration += sample_delay(delay_rngs[w], prof.delay_mean, prof.delay_std)
                # gradient is evaluated lazily at arrival, against the snapshot taken here
                push(t + duration, GRADIENT_ARRIVAL, w, (snap, rows, t))
            elif kind == GRADIENT_ARRIVAL:
                snap, rows, started = payload
                shard = profiles[w].shard
                batch = Batch(shard.features[rows], shard.labels[rows])
                grad = gradient(spec, snap, batch)
                outcome = server.submit_gradient(GradientMessage(w, grad, snap.version, started))
                if outcome.applied:
                    series.gradients_flushed += outcome.flushed_count
                    for released in outcome.flushed_workers:
                        push(t, WORKER_READY, released)
            else:
                series.records.append(_record(t, server, spec, split))
        t = budget
        outcome = server.force_flush()
        series.gradients_flushed += outcome.flushed_count
        series.records.append(_record(budget, server, spec, split))
    except NumericError as exc:
        raise NumericError(f"[{config.policy.label}] at virtual time {t:.6f}s: {exc}") from exc

    series.staleness_histogram = server.staleness_histogram
    series.gradients_submitted = server.submitted
    return series


def run_comparison(base_config: SimConfig, spec: ModelSpec, split: DatasetSplit,
                   profiles: list[WorkerProfile], policies: list[AggregationPolicy],
                   initial_params: ParameterVector | None = None) -> list[MetricsSeries]:
    """Run every policy from the same initial parameters, shards and seeds."""
    if len(policies) < 2:
        raise ConfigError("a comparison needs at least two policies")
    if initial_params is None:
        initial_params = init_params(spec, base_config.rng_seed)
    return [
        run_simulation(replace(base_config, policy=pol), spec, split, profiles, initial_params)
        for pol in policies
    ]


def run_threaded(config: SimConfig, spec: ModelSpec, split: DatasetSplit,
                 profiles: list[WorkerProfile], initial_params: ParameterVector | None = None,
                 time_scale: float = 0.01) -> MetricsSeries:
    """Wall-clock variant with one OS thread per worker.

    Virtual seconds are slept as ``time_scale`` real seconds.  Nothing here
    is deterministic; use it only as a sanity check of the server's locking
    and barrier behaviour.
    """
    if len(profiles) != config.worker_count:
        raise ConfigError(f"{len(profiles)} worker profiles for worker_count={config.worker_count}")
    if initial_params is None:
        initial_params = init_params(spec, config.rng_seed)
    server = ParameterServer(initial_params, config.policy, config.worker_count, config.lr)
    released = threading.Condition()
    waiting: set[int] = set()
    stop = threading.Event()
    errors: list[BaseException] = []
    start = wallclock.monotonic()

    def now():
        return (wallclock.monotonic() - start) / time_scale

    def worker(prof: WorkerProfile):
        batch_rng = make_rng(config.rng_seed, prof.worker_id, BATCH_STREAM)
        delay_rng = make_rng(config.rng_seed, prof.worker_id, DELAY_STREAM)
        try:
            while not stop.is_set():
                values, version = server.fetch_params()
                rows = batch_rng.integers(0, len(prof.shard), size=config.batch_size)
                grad = gradient(spec, ParameterVector(values, version),
                                Batch(prof.shard.features[rows], prof.shard.labels[rows]))
                duration = prof.base_compute_time
                if prof.delayed:
                    duration += sample_delay(delay_rng, prof.delay_mean, prof.delay_std)
                if stop.wait(duration * time_scale):
                    return
                with released:
                    waiting.add(prof.worker_id)
                    outcome = server.submit_gradient(
                        GradientMessage(prof.worker_id, grad, version, now()))
                    if outcome.applied:
                        waiting.difference_update(outcome.flushed_workers)
                        released.notify_all()
                    while prof.worker_id in waiting and not stop.is_set():
                        released.wait(0.05)
        except BaseException as exc:  # surfaced to the caller after join
            errors.append(exc)
            stop.set()

    threads = [threading.Thread(target=worker, args=(p,), daemon=True) for p in profiles]
    for th in threads:
        th.start()
    series = MetricsSeries(policy=config.policy.label)
    for t in evaluation_times(config.time_budget, config.eval_interval)[:-1]:
        if stop.wait(max(0.0, t * time_scale - (wallclock.monotonic() - start))):
            break
        with released:
            series.records.append(_record(t, server, spec, split))
    remaining = config.time_budget * time_scale - (wallclock.monotonic() - start)
    if remaining > 0:
        stop.wait(remaining)
    stop.set()
    with released:
        released.notify_all()
    for th in threads:
        th.join()
    if errors:
        raise errors[0]
    server.force_flush()
    series.records.append(_record(config.time_budget, server, spec, split))
    series.staleness_histogram = server.staleness_histogram
    series.gradients_submitted = server.submitted
    return series
