import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from initiative import Dataset

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.register_profile("thorough", deadline=None, max_examples=500)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def dataset(rows):
    """Dataset from ``(ts, sender, receiver[, channel])`` tuples."""
    ts = [r[0] for r in rows]
    snd = [r[1] for r in rows]
    rcv = [r[2] for r in rows]
    chan = [r[3] if len(r) > 3 else "call" for r in rows]
    return Dataset.from_arrays(ts, snd, rcv, np.array(chan, dtype="<U4"))


@pytest.fixture
def make_dataset():
    return dataset


def event_text(rows, header="ts\tfrom\tto\tchannel"):
    lines = [header] + ["\t".join(str(v) for v in r) for r in rows]
    return ("\n".join(lines) + "\n").encode()


ACCEPTANCE_LINES = {}


def record_criterion(number, title, passed, detail):
    line = f"{'PASS' if passed else 'FAIL'}  criterion {number:>2}: {title} ({detail})"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])
