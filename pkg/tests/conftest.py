"""Session bookkeeping for the acceptance suite.

Every hypothesis test gets its example invocations counted, and its
outcome recorded, so the invariant-suite criterion can check them without
running them twice. The acceptance lines are repeated in the terminal
summary.
"""

from collections import Counter

PROPERTY_CALLS: Counter = Counter()
PROPERTY_KEYS: set = set()
PROPERTY_OUTCOMES: dict = {}
ACCEPTANCE_LINES: list = []

LAST = "test_c9_invariant_suites"


def count_examples(key, fn):
    """Wrap a hypothesis test so each generated example bumps PROPERTY_CALLS[key]."""
    hyp = getattr(fn, "hypothesis", None)
    if hyp is None or getattr(hyp.inner_test, "_counted", False):
        return
    inner = hyp.inner_test

    def counted(*args, **kwargs):
        PROPERTY_CALLS[key] += 1
        return inner(*args, **kwargs)

    counted._counted = True
    hyp.inner_test = counted


def property_key(module_name, fn_name):
    return f"{module_name}::{fn_name}"


def pytest_collection_modifyitems(session, config, items):
    for item in items:
        fn = getattr(item, "obj", None)
        if fn is not None and hasattr(fn, "hypothesis"):
            key = property_key(item.module.__name__, item.name)
            PROPERTY_KEYS.add(key)
            count_examples(key, fn)
    # the invariant-suite criterion reads everyone else's results
    items.sort(key=lambda it: it.name == LAST)


def pytest_runtest_logreport(report):
    if report.when != "call":
        return
    module, _, name = report.nodeid.partition("::")
    key = property_key(module.rsplit("/", 1)[-1].removesuffix(".py"), name)
    if key in PROPERTY_KEYS:
        PROPERTY_OUTCOMES[key] = report.passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
