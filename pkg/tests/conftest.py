import math

import numpy as np
import pytest

from cbdi.mechanisms.mechanism import evaluate, power_mechanism


def value(m, x):
    """Scalar Psi(x) for a mechanism or a decomposition part."""
    if hasattr(m, "evaluate") and not hasattr(m, "jumps"):
        return float(m.evaluate(np.array([float(x)]))[0])
    return float(evaluate(m, np.array([float(x)]))[0])


@pytest.fixture
def feller():
    return power_mechanism([(1.0, 2.0)])


@pytest.fixture
def stable_15():
    return power_mechanism([(1.0, 1.5)])


def gamma(x):
    return math.gamma(x)


# one line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES = []


def record_criterion(number, passed, detail, seconds):
    line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}  ({seconds:.1f} s)"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
