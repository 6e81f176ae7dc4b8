"""Acceptance criteria, one test each, each printing a PASS/FAIL line.

The trend criteria (1-4) share one batch of 24 desk-scale runs: bundled
phases 1-4, both protocols, seeds 1-3, durations scaled by 0.1.
"""

import csv
import importlib
import random
import statistics
import time
from collections import defaultdict

import pytest

import conftest
from oracles import epidemic_reachable, prophet_tables
from pnesim.cli import main
from pnesim.config import bundled_phase
from pnesim.engine import replay_contacts, simulate
from pnesim.report import Event, EventKind, StatsCollector, format_report, parse_report
from pnesim.routing import Message

PHASES = (1, 2, 3, 4)
SEEDS = (1, 2, 3)
SCALE = 0.1
TREND_BUDGET = 300.0  # seconds, all 24 runs
PHASE1_BUDGET = 60.0  # seconds, one full-length phase 1 run
PROPERTY_MODULES = ("test_geo", "test_mobility", "test_net", "test_routing", "test_sensing",
                    "test_engine", "test_report", "test_config")
MIN_EXAMPLES = 1000


def verdict(criterion, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] {criterion}: {detail}"
    print(line)
    conftest.ACCEPTANCE_LINES.append(line)
    assert ok, line


# ------------------------------------------------------------ trend runs


@pytest.fixture(scope="module")
def trends(tmp_path_factory):
    out = tmp_path_factory.mktemp("trends")
    argv = ["--phase", *map(str, PHASES), "--protocol", "epidemic", "prophet",
            "--seed", str(SEEDS[0]), "--runs", str(len(SEEDS)), "--duration-scale", str(SCALE), "--out", str(out)]
    start = time.perf_counter()
    assert main(argv) == 0
    elapsed = time.perf_counter() - start
    cells = defaultdict(list)
    with (out / "summary.csv").open() as f:
        for row in csv.DictReader(f):
            cells[(int(row["phase"].removeprefix("phase")), row["protocol"])].append(row)
    assert all(len(cells[(p, proto)]) == len(SEEDS) for p in PHASES for proto in ("epidemic", "prophet"))

    def mean(phase, protocol, key):
        return statistics.fmean(float(r[key]) for r in cells[(phase, protocol)])

    def each(phase, protocol, key):
        return [float(r[key]) for r in cells[(phase, protocol)]]

    return mean, each, elapsed


def test_c1_overhead_trend(trends):
    mean, _, elapsed = trends
    pairs = {p: (mean(p, "prophet", "overhead_ratio"), mean(p, "epidemic", "overhead_ratio")) for p in PHASES}
    ok = all(pr < ep for pr, ep in pairs.values()) and elapsed < TREND_BUDGET
    detail = ", ".join(f"P{p} prophet {pr:.1f} < epidemic {ep:.1f}" for p, (pr, ep) in pairs.items())
    verdict("C1 overhead trend", ok, f"{detail}; 24 runs in {elapsed:.0f}s (budget {TREND_BUDGET:.0f}s)")


def test_c2_latency_trend(trends):
    mean, _, _ = trends
    pairs = {p: (mean(p, "epidemic", "latency_avg"), mean(p, "prophet", "latency_avg")) for p in PHASES}
    ok = all(ep < pr for ep, pr in pairs.values())
    detail = ", ".join(f"P{p} epidemic {ep:.0f}s < prophet {pr:.0f}s" for p, (ep, pr) in pairs.items())
    verdict("C2 latency trend", ok, detail)


def test_c3_delivery_level(trends):
    _, each, _ = trends
    floor = {1: 0.70, 4: 0.85}
    worst = {(p, proto): min(each(p, proto, "delivery_prob")) for p in floor for proto in ("epidemic", "prophet")}
    ok = all(v >= floor[p] for (p, _), v in worst.items())
    detail = ", ".join(f"P{p} {proto} min {v:.4f} >= {floor[p]}" for (p, proto), v in worst.items())
    verdict("C3 delivery level", ok, detail)


def test_c4_delivery_trend(trends):
    mean, _, _ = trends
    pairs = {proto: (mean(1, proto, "delivery_prob"), mean(4, proto, "delivery_prob")) for proto in ("epidemic", "prophet")}
    ok = all(p4 > p1 for p1, p4 in pairs.values())
    detail = ", ".join(f"{proto} P1 {p1:.4f} -> P4 {p4:.4f}" for proto, (p1, p4) in pairs.items())
    verdict("C4 delivery trend", ok, detail)


# -------------------------------------------------------------- oracles


def random_trace(rng):
    n = rng.randint(2, 8)
    k = rng.randint(1, 20)
    times = sorted(rng.sample(range(0, 300), k))
    contacts = [(float(t), *rng.sample(range(n), 2)) for t in times]
    msgs = []
    for i in range(rng.randint(1, 6)):
        src, dst = rng.sample(range(n), 2)
        msgs.append((f"m{i}", src, dst, float(rng.randint(0, 250)), float(rng.randint(5, 200))))
    return n, msgs, contacts


def test_c5_epidemic_oracle():
    rng = random.Random(2024)
    traces = 300
    start = time.perf_counter()
    mismatches = 0
    for _ in range(traces):
        n, msgs, contacts = random_trace(rng)
        hosts = replay_contacts(
            n, [Message(mid, s, d, 100, t, ttl) for mid, s, d, t, ttl in msgs], contacts, "epidemic"
        )
        delivered = set().union(*(h.delivered for h in hosts))
        mismatches += delivered != epidemic_reachable(msgs, contacts)
    elapsed = time.perf_counter() - start
    ok = mismatches == 0 and elapsed < 10
    verdict("C5 epidemic oracle", ok, f"{traces} traces, {mismatches} mismatches, {elapsed:.2f}s (budget 10s)")


def test_c6_prophet_oracle():
    rng = random.Random(7)
    sequences, worst = 200, 0.0
    for _ in range(sequences):
        n = rng.randint(2, 8)
        t, encounters = 0.0, []
        for _ in range(rng.randint(1, 30)):
            t += rng.choice([0.0, rng.uniform(0, 600)])
            encounters.append((t, *rng.sample(range(n), 2)))
        hosts = replay_contacts(n, [], encounters, "prophet")
        expected = prophet_tables(n, encounters)
        for h in hosts:
            for d in range(n):
                worst = max(worst, abs(h.table[d] - expected[h.address].get(d, 0.0)))
    verdict("C6 prophet oracle", worst <= 1e-9, f"{sequences} sequences, max abs error {worst:.2e} (tolerance 1e-9)")


def stats_of(events):
    c = StatsCollector()
    for e in events:
        c.record(e)
    return c.finalize()


def test_c7_metrics_oracle():
    C, R, D, A = EventKind.CREATED, EventKind.RELAYED, EventKind.DELIVERED, EventKind.ABORTED
    # a: created 4, first deliveries of m0 at 10 and m1 at 40, m0 delivered twice,
    # 5 plain relays, one abort: relayed = 5 + 3 deliveries = 8
    stream_a = [Event(C, 0, f"m{k}") for k in range(4)] + [
        Event(R, 2, "m0"), Event(R, 3, "m1"), Event(A, 4, "m2"), Event(R, 5, "m2"),
        Event(D, 10, "m0", created_at=0), Event(R, 20, "m1"), Event(R, 25, "m3"),
        Event(D, 30, "m0", created_at=0), Event(D, 40, "m1", created_at=0),
    ]
    # b: created 2 at t=10 and t=20, both delivered straight away at t=50
    stream_b = [Event(C, 10, "x"), Event(C, 20, "y"), Event(D, 50, "x"), Event(D, 50, "y")]
    # c: nothing delivered
    stream_c = [Event(C, 0, "z"), Event(R, 5, "z")]
    cases = [
        (stream_a, (0.5, 3.0, 25.0)),  # 2/4, (8-2)/2, (10+40)/2
        (stream_b, (1.0, 0.0, 35.0)),  # 2/2, (2-2)/2, (40+30)/2
        (stream_c, (0.0, None, None)),
    ]
    ok, detail = True, []
    for i, (events, (dp, oh, lat)) in enumerate(cases):
        s = stats_of(events)
        got = (s.delivery_prob, None if s.delivered == 0 else s.overhead_ratio, None if s.delivered == 0 else s.latency_avg)
        ok &= got == (dp, oh, lat)
        detail.append(f"stream {'abc'[i]} {got}")
    headline = stats_of([Event(C, 0, f"m{k}") for k in range(378)] + [Event(D, 1, f"m{k}") for k in range(350)])
    shown = parse_report(format_report(headline))["delivery_prob"]
    ok &= shown == "0.9259"
    verdict("C7 metrics oracle", ok, "; ".join(detail) + f"; 350/378 -> {shown}")


def test_c8_determinism(tmp_path):
    argv = ["--phase", "1", "2", "--protocol", "epidemic", "prophet", "--runs", "2", "--duration-scale", "0.05"]
    outputs = []
    for name, jobs in (("first", "1"), ("second", "1"), ("parallel", "3")):
        out = tmp_path / name
        assert main(argv + ["--out", str(out), "--jobs", jobs]) == 0
        outputs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
    ok = outputs[0] == outputs[1] == outputs[2] and len(outputs[0]) == 9
    verdict("C8 determinism", ok, f"{len(outputs[0])} files byte-identical across two serial runs and --jobs 3")


def test_c10_phase1_runtime():
    cfg = bundled_phase(1)
    times = {}
    for protocol in ("epidemic", "prophet"):
        start = time.perf_counter()
        simulate(cfg, protocol, [StatsCollector()])
        times[protocol] = time.perf_counter() - start
    ok = cfg.duration == 43200 and cfg.host_count == 126 and cfg.step == 1 and max(times.values()) < PHASE1_BUDGET
    detail = ", ".join(f"{p} {t:.1f}s" for p, t in times.items())
    verdict("C10 phase 1 runtime", ok, f"43200 s, 126 hosts, step 1 s: {detail} (budget {PHASE1_BUDGET:.0f}s each)")


# ---------------------------------------------------------- invariants


def _property_tests():
    found = {}
    for name in PROPERTY_MODULES:
        mod = importlib.import_module(name)
        for attr in dir(mod):
            fn = getattr(mod, attr)
            if attr.startswith("test_") and hasattr(fn, "hypothesis"):
                found[conftest.property_key(name, attr)] = fn
    return found


def test_c9_invariant_suites():
    tests = _property_tests()
    by_module = {m: [k for k in tests if k.startswith(m + "::")] for m in PROPERTY_MODULES}
    for key, fn in tests.items():
        if key in conftest.PROPERTY_OUTCOMES:
            continue
        # not run earlier in this session: run it here
        conftest.count_examples(key, fn)
        try:
            fn()
            conftest.PROPERTY_OUTCOMES[key] = True
        except Exception:
            conftest.PROPERTY_OUTCOMES[key] = False
    failed = [k for k in tests if not conftest.PROPERTY_OUTCOMES[k]]
    thin = [k for k in tests if conftest.PROPERTY_CALLS[k] < MIN_EXAMPLES]
    empty = [m for m, keys in by_module.items() if not keys]
    ok = not failed and not thin and not empty
    fewest = min(conftest.PROPERTY_CALLS[k] for k in tests)
    detail = f"{len(tests)} properties over {len(PROPERTY_MODULES)} modules, fewest examples {fewest}"
    if failed:
        detail += f"; failed {failed}"
    if thin:
        detail += f"; under {MIN_EXAMPLES} examples {thin}"
    if empty:
        detail += f"; no properties in {empty}"
    verdict("C9 invariant suites", ok, detail)
