import pytest
from hypothesis import given, strategies as st

from smoothswitch.errors import ConfigError
from smoothswitch.threshold import ThresholdSchedule, should_flush, threshold_at


def test_paper_step_size_starts_at_one():
    assert threshold_at(ThresholdSchedule(step_size=300, k_max=25), 0) == 1


def test_cap_at_worker_count():
    assert threshold_at(ThresholdSchedule(step_size=500, k_max=25), 12_000) == 25


@pytest.mark.parametrize("u, k", [(0, 1), (499, 1), (500, 2), (999, 2), (1000, 3)])
def test_floor_boundaries(u, k):
    assert threshold_at(ThresholdSchedule(step_size=500, k_max=25), u) == k


def test_from_lr_multiple():
    assert ThresholdSchedule.from_lr_multiple(3, 0.01, 25).step_size == 300
    assert ThresholdSchedule.from_lr_multiple(5, 0.01, 25).step_size == 500


@pytest.mark.parametrize("kwargs", [dict(step_size=0, k_max=5), dict(step_size=1, k_max=5, k_initial=0),
                                    dict(step_size=1, k_max=5, k_initial=6),
                                    dict(step_size=1, k_max=5, kind="exp")])
def test_invalid_schedules(kwargs):
    with pytest.raises(ConfigError):
        ThresholdSchedule(**kwargs)


@pytest.mark.parametrize("n, k, expected", [(1, 1, True), (24, 25, False), (25, 25, True), (0, 1, False)])
def test_should_flush(n, k, expected):
    assert should_flush(n, k) is expected


schedules = st.builds(
    lambda s, kmax, kinit: ThresholdSchedule(step_size=s, k_max=kmax, k_initial=min(kinit, kmax)),
    st.integers(1, 1000), st.integers(1, 64), st.integers(1, 64),
)


@given(schedules, st.integers(0, 10**6), st.integers(0, 10**4))
def test_monotone_and_bounded(schedule, u, du):
    k = threshold_at(schedule, u)
    assert schedule.k_initial <= k <= schedule.k_max
    assert threshold_at(schedule, u + du) >= k


@given(schedules)
def test_reaches_k_max(schedule):
    u = (schedule.k_max - schedule.k_initial) * schedule.step_size
    assert threshold_at(schedule, u) == schedule.k_max
    assert threshold_at(schedule, u + 10**6) == schedule.k_max


@given(st.integers(1, 64), st.integers(0, 10**6))
def test_regime_endpoints(w, u):
    async_like = ThresholdSchedule.constant(1)
    sync_like = ThresholdSchedule.constant(w)
    assert should_flush(1, threshold_at(async_like, u))
    assert should_flush(w, threshold_at(sync_like, u))
    assert not should_flush(w - 1, threshold_at(sync_like, u))
