import numpy as np
import pytest

from ecgc.detection import SignalViews, delineate, detect_beats
from ecgc.synthgen import GenSpec, generate

# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


def observe(r):
    v = SignalViews(r)
    return v, delineate(r, detect_beats(r, v), v)


@pytest.fixture(scope="session")
def normal_record():
    return generate(GenSpec(rhythm="NORMAL", rate_bpm=72.0, seed=11, duration_s=20.0))


@pytest.fixture(scope="session")
def afib_record():
    return generate(GenSpec(cls="A", rhythm="AFIB", rate_bpm=100.0, p_present=False, seed=12,
                            duration_s=20.0))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
