import pytest
from hypothesis import HealthCheck, settings

from helpers import ACCEPTANCE_LINES

from cellforge.model import Composition, joint, link

settings.register_profile(
    "cellforge",
    deadline=None,
    max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("cellforge")

def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


J = joint("J", 1.0, 2.0, 50.0, 0.5)
K = joint("K", 1.5, 1.0, 50.0, 0.5)


@pytest.fixture
def two_link():
    """Unit links, unit limits: the textbook 2R arm."""
    return Composition((joint("A", 1.0, 1.0, 100.0), link("a", 1.0), joint("B", 1.0, 1.0, 100.0), link("b", 1.0)))


@pytest.fixture
def arm1():
    return Composition((J, link("a", 0.8)))


@pytest.fixture
def arm2():
    return Composition((J, link("a", 0.5), K, link("b", 0.4)))


@pytest.fixture
def arm3():
    return Composition((J, link("a", 0.45), J, link("b", 0.4), K, link("t", 0.12)))
