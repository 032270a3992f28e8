from __future__ import annotations

import random
from collections import deque

import pytest

from uvmpc.field import FieldParams
from uvmpc.shamir import Party
from uvmpc.transport import SimNetwork, open_session


class ScriptedRng:
    """Returns the scripted values in order, then falls back to a seeded PRNG."""

    def __init__(self, values=(), seed=0):
        self.values = deque(values)
        self.fallback = random.Random(seed)

    def randrange(self, start, stop=None):
        if self.values:
            return self.values.popleft()
        return self.fallback.randrange(start, stop)


def run_parties(p_count, f, job, t=None, rngs=None, seed=0, timeout=10.0):
    """Open one session on a fresh simulator and run ``job(party)`` everywhere."""
    net = SimNetwork(p_count, timeout=timeout)

    def main(ep):
        rng = rngs[ep.party_id] if rngs else random.Random(f"{seed}/{ep.party_id}")
        session = open_session(ep, f, b"test", random.Random(seed))
        return job(Party(session, rng, t))

    return net.run(main)


@pytest.fixture
def f11():
    return FieldParams(11)


@pytest.fixture
def f13():
    return FieldParams(13)


# Acceptance criteria report -------------------------------------------------

_criteria: dict[str, str] = {}


def pytest_runtest_logreport(report):
    label = getattr(report, "criterion", None)
    if not label:
        return
    if report.failed:
        _criteria[label] = "FAIL"
    elif report.when == "call":
        _criteria.setdefault(label, "PASS")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        report.criterion = marker.args[0]


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(label): acceptance criterion")


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(_criteria, key=lambda s: int(s.split(".")[0])):
        terminalreporter.write_line(f"{_criteria[label]}  {label}")
