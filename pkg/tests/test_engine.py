import numpy as np
import pytest

from hrc_sim.engine import EventQueue, SchedulingError, random_stream


def drain(q):
    fired = []
    while (ev := q.pop()) is not None:
        fired.append((ev.fire_time, ev.sequence_no))
    return fired


def test_future_event_fires_at_its_time():
    q = EventQueue()
    q.schedule(3.0)
    q.pop()
    q.schedule(5.0)
    assert q.pop().fire_time == 5.0
    assert q.now == 5.0


def test_ties_fire_in_insertion_order():
    q = EventQueue()
    a = q.schedule(5.0, target_agent="a")
    b = q.schedule(5.0, target_agent="b")
    first, second = q.pop(), q.pop()
    assert (first.target_agent, second.target_agent) == ("a", "b")
    assert first.sequence_no < second.sequence_no
    assert not a.pending and not b.pending


def test_scheduling_in_the_past_is_a_fault():
    q = EventQueue()
    q.schedule(3.0)
    q.pop()
    with pytest.raises(SchedulingError):
        q.schedule(2.0)


def test_cancel_semantics():
    q = EventQueue()
    h = q.schedule(4.0)
    assert q.cancel(h) is True
    assert q.cancel(h) is False
    assert q.pop() is None
    h2 = q.schedule(6.0)
    q.pop()
    assert q.cancel(h2) is False


def test_cancelled_events_never_fire_and_len_tracks_live_events():
    q = EventQueue()
    calls = []
    handles = [q.schedule(float(t), lambda t=t: calls.append(t)) for t in range(5)]
    q.cancel(handles[2])
    assert len(q) == 4
    while q.step() is not None:
        pass
    assert calls == [0, 1, 3, 4]
    assert len(q) == 0


def test_callbacks_may_schedule_at_the_current_instant():
    q = EventQueue()
    order = []
    q.schedule(1.0, lambda: (order.append("x"), q.schedule_in(0.0, lambda: order.append("y"))))
    q.schedule(1.0, lambda: order.append("z"))
    while q.step():
        pass
    assert order == ["x", "z", "y"]


def test_random_streams_are_reproducible_and_distinct():
    a1 = random_stream(42, 0, 1).random(5)
    a2 = random_stream(42, 0, 1).random(5)
    b = random_stream(42, 1, 1).random(5)
    c = random_stream(43, 0, 1).random(5)
    assert np.array_equal(a1, a2)
    assert not np.array_equal(a1, b)
    assert not np.array_equal(a1, c)
