import math
from dataclasses import replace

import numpy as np
import pytest

from smoothswitch.data import gen_synthetic, shard
from smoothswitch.errors import ConfigError, NumericError
from smoothswitch.model import ModelSpec, ParameterVector, init_params
from smoothswitch.server import AggregationPolicy
from smoothswitch.sim import (
    EVALUATION,
    GRADIENT_ARRIVAL,
    SimConfig,
    evaluation_times,
    make_worker_profiles,
    run_comparison,
    run_simulation,
    run_threaded,
    sample_delay,
)
from smoothswitch.threshold import ThresholdSchedule

SPEC = ModelSpec(20, 10)


def hybrid(step=50, w=8):
    return AggregationPolicy.hybrid(ThresholdSchedule(step, w))


def setup(split_, w=8, batch=16, **kw):
    profiles = make_worker_profiles(shard(split_.train, w), batch, **kw)
    config = SimConfig(w, 2.0, AggregationPolicy.asynchronous(), batch_size=batch, rng_seed=1,
                       eval_interval=0.25)
    return config, profiles


def test_sample_delay_degenerate():
    rng = np.random.default_rng(0)
    assert all(sample_delay(rng, 0.3, 0.0) == 0.3 for _ in range(5))
    assert all(sample_delay(rng, -0.3, 0.0) == 0.0 for _ in range(5))


def test_sample_delay_half_normal_mean():
    rng = np.random.default_rng(12345)
    draws = np.maximum(rng.normal(0.0, 0.25, 10**6), 0.0)
    # same generator path through sample_delay on a fresh stream
    rng2 = np.random.default_rng(12345)
    assert [sample_delay(rng2, 0.0, 0.25) for _ in range(5)] == draws[:5].tolist()
    closed_form = 0.25 / math.sqrt(2 * math.pi)
    assert closed_form == pytest.approx(0.0997, abs=1e-4)
    assert draws.mean() == pytest.approx(closed_form, abs=1e-3)
    assert draws.min() == 0.0


def test_sample_delay_seeded():
    a = [sample_delay(np.random.default_rng(3), 0, 1) for _ in range(3)]
    b = [sample_delay(np.random.default_rng(3), 0, 1) for _ in range(3)]
    assert a == b


def test_sample_delay_rejects_negative_std():
    with pytest.raises(ConfigError):
        sample_delay(np.random.default_rng(0), 0, -1)


def test_evaluation_grid():
    assert evaluation_times(1.0, 0.25) == [0.25, 0.5, 0.75, 1.0]
    assert evaluation_times(1.0, 0.3) == [0.3, 0.6, pytest.approx(0.9), 1.0]
    assert evaluation_times(100.0, 2.0)[-2:] == [98.0, 100.0]
    assert len(evaluation_times(100.0, 2.0)) == 50


def test_delayed_workers_are_the_first_half():
    shards = shard(gen_synthetic(0, n_samples=250), 25)
    profiles = make_worker_profiles(shards, 32)
    assert [p.delayed for p in profiles] == [True] * 13 + [False] * 12
    assert all(p.base_compute_time == pytest.approx(0.032) for p in profiles)


def test_config_validation(small_split):
    with pytest.raises(ConfigError):
        SimConfig(0, 1.0, AggregationPolicy.asynchronous())
    with pytest.raises(ConfigError):
        SimConfig(2, 1.0, AggregationPolicy.asynchronous(), eval_interval=2.0)
    config, profiles = setup(small_split)
    with pytest.raises(ConfigError):
        run_simulation(config, SPEC, small_split, profiles[:-1])


def test_single_worker_policies_coincide(small_split):
    config, profiles = setup(small_split, w=1)
    policies = [AggregationPolicy.synchronous(), AggregationPolicy.asynchronous(), hybrid(5, 1)]
    runs = run_comparison(config, SPEC, small_split, profiles, policies)
    assert runs[0].same_trajectory(runs[1]) and runs[1].same_trajectory(runs[2])


def test_identical_seed_identical_series(small_split):
    config, profiles = setup(small_split)
    cfg = replace(config, policy=hybrid())
    a = run_simulation(cfg, SPEC, small_split, profiles)
    b = run_simulation(cfg, SPEC, small_split, profiles)
    assert a.records == b.records
    assert a.staleness_histogram == b.staleness_histogram
    c = run_simulation(replace(cfg, rng_seed=2), SPEC, small_split, profiles)
    assert a.records != c.records


def test_policy_equivalence_in_simulation(small_split):
    config, profiles = setup(small_split)
    a, h1 = run_comparison(config, SPEC, small_split, profiles,
                           [AggregationPolicy.asynchronous(),
                            AggregationPolicy.hybrid(ThresholdSchedule.constant(1))])
    assert a.same_trajectory(h1)
    s, hw = run_comparison(config, SPEC, small_split, profiles,
                           [AggregationPolicy.synchronous(),
                            AggregationPolicy.hybrid(ThresholdSchedule.constant(8))])
    assert s.same_trajectory(hw)


def test_clock_and_conservation(small_split):
    config, profiles = setup(small_split)
    trace = []
    series = run_simulation(replace(config, policy=hybrid()), SPEC, small_split, profiles, trace=trace)
    times = series.times
    assert all(b > a for a, b in zip(times, times[1:]))
    assert times[-1] == config.time_budget
    assert len(times) == 8
    assert max(t for t, _, _ in trace) <= config.time_budget
    assert [t for t, _, _ in trace] == sorted(t for t, _, _ in trace)
    assert series.gradients_flushed == series.gradients_submitted
    assert sum(series.staleness_histogram.values()) == series.gradients_submitted
    for r in series.records:
        assert 0 <= r.test_accuracy <= 1 and r.train_loss >= 0 and r.test_loss >= 0


def test_worker_streams_are_isolated(small_split):
    config, profiles = setup(small_split)
    base_trace, changed_trace = [], []
    run_simulation(config, SPEC, small_split, profiles, trace=base_trace)
    # worker 0 gets a very different delay law; worker 1's own timeline must not move
    altered = [replace(p, delay_std=2.0, delay_mean=0.5) if p.worker_id == 0 else p for p in profiles]
    run_simulation(config, SPEC, small_split, altered, trace=changed_trace)

    def arrivals(tr, w):
        return [t for t, kind, who in tr if kind == GRADIENT_ARRIVAL and who == w]

    assert arrivals(base_trace, 1) == arrivals(changed_trace, 1)
    assert arrivals(base_trace, 0) != arrivals(changed_trace, 0)


def test_throughput_ordering(small_split):
    config, profiles = setup(small_split)
    sync, asyn, hyb = run_comparison(config, SPEC, small_split, profiles,
                                     [AggregationPolicy.synchronous(), AggregationPolicy.asynchronous(),
                                      hybrid()])
    assert asyn.final.update_count > hyb.final.update_count > sync.final.update_count


def test_async_beats_sync_on_update_count_reference_scale(small_split):
    config, profiles = setup(small_split, w=25, batch=32)
    config = replace(config, worker_count=25, time_budget=3.0, eval_interval=1.0)
    sync, asyn = run_comparison(config, SPEC, small_split, profiles,
                                [AggregationPolicy.synchronous(), AggregationPolicy.asynchronous()])
    assert asyn.final.update_count > sync.final.update_count


def test_shared_initialization(small_split):
    config, profiles = setup(small_split)
    theta0 = init_params(SPEC, 77)
    runs = run_comparison(config, SPEC, small_split, profiles,
                          [AggregationPolicy.synchronous(), AggregationPolicy.asynchronous()], theta0)
    assert runs[0].records[0].time == runs[1].records[0].time
    with pytest.raises(ConfigError):
        run_comparison(config, SPEC, small_split, profiles, [AggregationPolicy.asynchronous()])


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_numeric_failure_reports_virtual_time(small_split):
    config, profiles = setup(small_split)
    huge = ParameterVector(np.full(SPEC.param_count, 1.7e308))
    with pytest.raises(NumericError, match="virtual time"):
        run_simulation(config, SPEC, small_split, profiles, huge)


def test_threaded_mode_smoke(small_split):
    config, profiles = setup(small_split, w=4)
    cfg = replace(config, worker_count=4, policy=AggregationPolicy.hybrid(ThresholdSchedule(3, 4)),
                  time_budget=1.0)
    series = run_threaded(cfg, SPEC, small_split, profiles, time_scale=0.2)
    assert series.final.time == 1.0
    assert series.final.update_count > 0
    assert series.gradients_submitted == sum(series.staleness_histogram.values())
    sync = run_threaded(replace(cfg, policy=AggregationPolicy.synchronous()), SPEC, small_split,
                        profiles, time_scale=0.2)
    assert sync.final.update_count > 0
