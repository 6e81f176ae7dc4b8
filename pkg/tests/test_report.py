import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import metrics
from pnesim.report import (
    CSV_HEADER,
    REPORT_KEYS,
    Event,
    EventKind,
    EventLog,
    StatsCollector,
    format_csv,
    format_report,
    parse_report,
)

PROPS = settings(max_examples=1000, deadline=None)
C, R, D, A = EventKind.CREATED, EventKind.RELAYED, EventKind.DELIVERED, EventKind.ABORTED


def collect(events):
    c = StatsCollector()
    for e in events:
        c.record(e)
    return c.finalize()


def test_duplicate_delivery_counts_once():
    s = collect([Event(C, 0, "m"), Event(D, 5, "m"), Event(D, 9, "m")])
    assert s.delivered == 1 and s.latency_avg == 5
    assert s.relayed == 2  # each delivered completion is also a relay


def test_aborted_transfer_is_not_relayed():
    s = collect([Event(C, 0, "m"), Event(A, 3, "m", 0, 1)])
    assert (s.relayed, s.aborted) == (0, 1)


def test_created_without_delivery():
    s = collect([Event(C, t, f"m{t}") for t in range(3)])
    assert s.created == 3 and s.delivered == 0 and s.delivery_prob == 0.0
    assert math.isnan(s.overhead_ratio) and math.isnan(s.latency_avg)


def test_nothing_recorded():
    s = collect([])
    assert s.created == 0 and s.delivery_prob == 0.0


def test_phase_one_delivery_ratio_rounds_to_four_places():
    events = [Event(C, 0, f"m{k}") for k in range(378)]
    events += [Event(D, 1, f"m{k}") for k in range(350)]
    s = collect(events)
    assert format_report(s).splitlines()[6] == "delivery_prob: 0.9259"


def test_overhead_ratio():
    events = [Event(C, 0, f"m{k}") for k in range(3)]
    events += [Event(R, 1, "m0") for _ in range(300)]
    events += [Event(D, 2, f"m{k}") for k in range(3)]
    s = collect(events)
    assert s.relayed == 303 and s.overhead_ratio == 100.0


def test_latency_average_and_median():
    events = [Event(C, 0, f"m{k}") for k in range(3)]
    events += [Event(D, 10 * (k + 1), f"m{k}") for k in range(3)]
    s = collect(events)
    assert (s.latency_avg, s.latency_med) == (20, 20)


def test_events_out_of_order_rejected():
    c = StatsCollector()
    c.record(Event(C, 5, "a"))
    with pytest.raises(ValueError):
        c.record(Event(C, 4, "b"))


def test_report_format_and_parse():
    s = collect([Event(C, 0, "m"), Event(D, 2.5, "m", hops=2)])
    text = format_report(s, {"scenario": "p1", "seed": 3})
    parsed = parse_report(text)
    assert list(parsed) == ["scenario", "seed", *REPORT_KEYS]
    assert parsed["delivery_prob"] == "1.0000" and parsed["overhead_ratio"] == "0.0000"
    assert parsed["latency_avg"] == "2.5000" and parsed["created"] == "1"


def test_not_available_rendering():
    assert parse_report(format_report(collect([])))["overhead_ratio"] == "NA"


def test_csv_header_and_row():
    s = collect([Event(C, 0, "m"), Event(D, 2, "m")])
    lines = format_csv([("phase1", "epidemic", 4, s)]).splitlines()
    assert lines[0] == ",".join(CSV_HEADER)
    assert lines[1] == "phase1,epidemic,4,1,1,1,1.0000,0.0000,2.0000"


def test_event_log_lines():
    log = EventLog()
    log.record(Event(C, 1.0, "m", 2, 3))
    log.record(Event(EventKind.LINK_UP, 2.0, "bluetooth", 0, 1))
    assert log.text() == "1.0 C m 2 3\n2.0 U bluetooth 0 1\n"


step = st.tuples(st.sampled_from(["created", "relayed", "delivered", "aborted"]), st.integers(0, 9), st.integers(0, 50))


@PROPS
@given(st.lists(step, max_size=80))
def test_metrics_match_straight_line_oracle(steps):
    t, seen, events, raw = 0.0, {}, [], []
    for kind, k, dt in steps:
        t += dt
        mid = f"m{k}"
        if kind == "created":
            if mid in seen:
                continue
            seen[mid] = t
        elif mid not in seen:
            continue
        born = seen[mid]
        events.append(Event(EventKind[kind.upper()], t, mid, created_at=born))
        raw.append((kind, t, mid, born))
    c = StatsCollector()
    for e in events:
        c.record(e)
        assert c.relayed >= c.delivered
    s = c.finalize()
    prob, overhead, avg, med, relayed, delivered = metrics(raw)
    assert (s.delivered, s.relayed) == (delivered, relayed)
    assert s.delivery_prob == prob
    assert s.delivery_prob * s.created == pytest.approx(s.delivered, abs=1e-9)
    assert 0 <= s.delivery_prob <= 1 and s.delivered <= s.created
    if overhead is None:
        assert math.isnan(s.overhead_ratio)
    else:
        assert s.overhead_ratio == overhead
        assert s.latency_avg == pytest.approx(avg, rel=1e-12) and s.latency_med == med
