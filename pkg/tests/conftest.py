import sys
from pathlib import Path

import pytest

from momentdecomp.joint import FiniteJoint
from momentdecomp.model import compile_model, load_model

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"
sys.path.insert(0, str(Path(__file__).resolve().parent))


@pytest.fixture
def fixtures_dir():
    return FIXTURES


@pytest.fixture
def example_b():
    """k=1, (Y1, Y2) = (x1, 1 - x1), compiled from the fixture file."""
    return compile_model(load_model(FIXTURES / "example_b.json"))[0]


@pytest.fixture
def example_c():
    """k=2, Y = x1 + x2, compiled from the fixture file."""
    return compile_model(load_model(FIXTURES / "example_c.json"))[0]


@pytest.fixture
def example_c_by_hand():
    return FiniteJoint(
        ["x1", "x2"],
        ["y"],
        {(0, 0, 0): 0.375, (0, 1, 1): 0.125, (1, 0, 1): 0.125, (1, 1, 2): 0.375},
    )


def pytest_terminal_summary(terminalreporter):
    from acceptance_report import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(RESULTS, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
