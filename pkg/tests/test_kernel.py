import doctest

import pytest

from upsched import kernel
from upsched.kernel import PHASE_ARRIVAL, PHASE_DECIDE, Kernel, SchedulingError


def test_docstring_examples():
    res = doctest.testmod(kernel)
    assert res.attempted > 0 and res.failed == 0


def test_same_tick_fires_in_issue_order():
    k = Kernel()
    out = []
    for tag in "xyz":
        k.schedule(7, out.append, tag)
    k.run_until()
    assert out == ["x", "y", "z"]


def test_decide_phase_runs_after_arrivals_of_the_same_tick():
    k = Kernel()
    out = []
    k.schedule(3, out.append, "decide", phase=PHASE_DECIDE)
    k.schedule(3, out.append, "arrive", phase=PHASE_ARRIVAL)
    k.run_until()
    assert out == ["arrive", "decide"]


def test_cancelled_events_never_fire():
    k = Kernel()
    out = []
    ev = k.schedule(2, out.append, "gone")
    k.schedule(4, out.append, "kept")
    assert k.cancel(ev)
    assert not k.cancel(ev)
    stats = k.run_until()
    assert out == ["kept"]
    assert stats.fired == 1 and stats.cancelled == 1


def test_cancel_after_fire_is_refused():
    k = Kernel()
    ev = k.schedule(1, lambda: None)
    k.run_until()
    assert not k.cancel(ev)


def test_scheduling_in_the_past_raises():
    k = Kernel()
    k.schedule(10, lambda: None)
    k.run_until()
    with pytest.raises(SchedulingError):
        k.schedule(5, lambda: None)


def test_run_until_stops_at_bound_and_advances_clock():
    k = Kernel()
    out = []
    k.schedule(5, out.append, 5)
    k.schedule(15, out.append, 15)
    stats = k.run_until(10)
    assert out == [5] and k.now == 10 and stats.pending == 1
    assert k.peek_time() == 15


def test_events_scheduled_during_a_callback_for_now_still_fire():
    k = Kernel()
    out = []

    def first():
        out.append("first")
        k.schedule(k.now, out.append, "chained")

    k.schedule(1, first)
    k.run_until(1)
    assert out == ["first", "chained"]


def test_trace_records_fire_order():
    k = Kernel(trace=True)
    k.schedule(2, lambda: None, kind="b")
    k.schedule(1, lambda: None, kind="a")
    k.run_until()
    assert [t[2] for t in k.trace] == ["a", "b"]
