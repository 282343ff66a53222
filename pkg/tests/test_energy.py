from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from wsnguard.energy import (
    ALWAYS_ON,
    Action,
    CostTable,
    EnergyBaseline,
    NodeEnergy,
    SleepSchedule,
    threshold_re,
    to_micro,
)

COSTS = CostTable(transmit=1_000_000, receive=1_000_000, sense=10, idle=10, sleep=1, processing=2)


def test_transmit_debits_linearly():
    e = NodeEnergy(to_micro(10), None)
    e.consume(Action.TRANSMIT, COSTS.of(Action.TRANSMIT), 0)
    assert e.residual == to_micro(9)
    assert not e.dead


def test_overdraw_clamps_to_zero_and_kills():
    e = NodeEnergy(to_micro(0.5), None)
    taken = e.consume(Action.RECEIVE, COSTS.of(Action.RECEIVE), 7)
    assert taken == to_micro(0.5)
    assert e.residual == 0
    assert e.dead and e.dead_at == 7
    assert e.consume(Action.RECEIVE, 5, 8) == 0


def test_schedule_examples():
    s = SleepSchedule(10, 0, 3)
    assert s.is_awake(2)
    assert not s.is_awake(5)
    assert not s.is_awake(13)


@given(
    st.integers(min_value=1, max_value=40).flatmap(
        lambda p: st.tuples(st.just(p), st.integers(0, p - 1), st.integers(1, p))
    ),
    st.integers(min_value=0, max_value=400),
)
def test_closed_form_awake_count_matches_enumeration(sched, t):
    period, offset, wake = sched
    s = SleepSchedule(period, offset, wake)
    table = [(r - offset) % period < wake for r in range(period)]
    assert [s.is_awake(r) for r in range(period)] == table
    assert s.awake_before(t) == sum(table[r % period] for r in range(t))
    nxt = s.next_awake(t)
    assert s.is_awake(nxt) and all(not s.is_awake(u) for u in range(t, nxt))


def test_schedule_validation():
    with pytest.raises(ValueError):
        SleepSchedule(10, 10, 3)
    with pytest.raises(ValueError):
        SleepSchedule(10, 0, 0)
    with pytest.raises(ValueError):
        CostTable(1, 1, 1, idle=1, sleep=1, processing=1)
    assert ALWAYS_ON.always_on and ALWAYS_ON.duty_cycle == 1


@given(st.integers(min_value=1, max_value=5_000), st.integers(min_value=0, max_value=3_000))
def test_sync_charges_exact_background_and_clamps_at_death(initial, t):
    sched = SleepSchedule(20, 0, 5)
    e = NodeEnergy(initial, sched)
    e.sync(t, COSTS)
    drained = 0
    death = None
    for tick in range(t):
        drained += COSTS.idle if sched.is_awake(tick) else COSTS.sleep
        if drained >= initial and death is None:
            death = tick + 1
    assert e.residual == max(0, initial - drained)
    assert sum(e.consumed.values()) == initial - e.residual
    assert e.dead_at == death


def test_predicted_depletion_is_first_exhausting_tick():
    e = NodeEnergy(100, SleepSchedule(4, 0, 1))
    at = e.predict_depletion(COSTS, 10_000)
    # one awake tick (10) plus three asleep (1 each) per 4-tick period
    drain = lambda t: sum(10 if u % 4 == 0 else 1 for u in range(t))
    assert drain(at) >= 100 > drain(at - 1)
    assert NodeEnergy(100, None).predict_depletion(COSTS, 50) is None


def test_baseline_examples():
    b = EnergyBaseline(150, ALWAYS_ON, idle=1, sleep=0, margin=Fraction(4, 5))
    assert b.threshold(0) == Fraction(4, 5) * 150
    assert b.expected(100) == 50
    assert b.threshold(100) == 40
    with pytest.raises(KeyError):
        threshold_re({"leaf": b}, "head", 3)
    assert threshold_re({"leaf": b}, "leaf", 100) == 40


def test_baseline_tracks_idle_node_exactly():
    sched = SleepSchedule(20, 0, 5)
    b = EnergyBaseline(50_000, sched, COSTS.idle, COSTS.sleep, Fraction(4, 5))
    e = NodeEnergy(50_000, sched)
    for t in (0, 7, 20, 133, 999):
        e.sync(t, COSTS)
        assert e.residual == b.expected(t)


def test_micro_units_are_exact():
    assert to_micro("0.0005") == 500
    assert to_micro(0.05) == 50_000
    with pytest.raises(ValueError):
        to_micro(-1)
