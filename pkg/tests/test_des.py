import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from qlinksim.des import SchedulingError, Simulator


def test_event_at_zero_dispatches_at_zero():
    sim = Simulator()
    seen = []
    sim.schedule(0, lambda: seen.append(sim.now))
    sim.run()
    assert seen == [0]


def test_dispatch_order_follows_time():
    sim = Simulator()
    seen = []
    sim.schedule(5, seen.append, 5)
    sim.schedule(3, seen.append, 3)
    sim.run()
    assert seen == [3, 5]


def test_equal_times_dispatch_in_insertion_order():
    sim = Simulator()
    seen = []
    sim.schedule(7, seen.append, "A")
    sim.schedule(7, seen.append, "B")
    sim.run()
    assert seen == ["A", "B"]


def test_priority_breaks_ties_before_insertion_order():
    sim = Simulator()
    seen = []
    sim.schedule(7, seen.append, "late", priority=2)
    sim.schedule(7, seen.append, "early", priority=-1)
    sim.run()
    assert seen == ["early", "late"]


def test_run_until_on_empty_queue_advances_clock():
    sim = Simulator()
    assert sim.run_until(100) == 0
    assert sim.now == 100


def test_run_until_dispatches_only_due_events():
    sim = Simulator()
    seen = []
    for t in (10, 20, 30, 40):
        sim.schedule(t, seen.append, t)
    assert sim.run_until(30) == 3
    assert seen == [10, 20, 30]
    assert sim.peek_time() == 40


def test_cancelled_event_never_fires():
    sim = Simulator()
    seen = []
    h = sim.schedule(5, seen.append, "x")
    sim.schedule(6, seen.append, "y")
    h.cancel()
    sim.run()
    assert seen == ["y"]
    assert all(not e.cancelled for e in sim.pending())


def test_scheduling_in_the_past_is_rejected():
    sim = Simulator()
    sim.run_until(50)
    with pytest.raises(SchedulingError):
        sim.schedule(49, lambda: None)
    with pytest.raises(SchedulingError):
        sim.run_until(10)


def test_events_scheduled_during_dispatch_at_same_time_fire_after():
    sim = Simulator()
    seen = []

    def first():
        seen.append("first")
        sim.schedule(sim.now, seen.append, "nested")

    sim.schedule(3, first)
    sim.schedule(3, seen.append, "second")
    sim.run()
    assert seen == ["first", "second", "nested"]


@pytest.mark.property
@given(st.lists(st.tuples(st.integers(0, 50), st.integers(-1, 3)), max_size=60))
def test_dispatch_is_stable_sort_of_time_priority_insertion(events):
    sim = Simulator()
    seen = []
    for i, (t, p) in enumerate(events):
        sim.schedule(t, seen.append, i, priority=p)
    sim.run()
    expected = sorted(range(len(events)), key=lambda i: (events[i][0], events[i][1], i))
    assert seen == expected


def test_tiebreak_matches_brute_force_on_random_insertions():
    rng = random.Random(7)
    for _ in range(200):
        n = rng.randint(1, 30)
        times = [rng.randint(0, 5) for _ in range(n)]
        sim = Simulator()
        seen = []
        for i, t in enumerate(times):
            sim.schedule(t, seen.append, i)
        sim.run()
        brute = [i for t in range(6) for i in range(n) if times[i] == t]
        assert seen == brute
