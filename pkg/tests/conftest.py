import numpy as np
import pytest

from wcg.appendix_g import generate_appendix_g
from wcg.experiments import prepare

ACCEPTANCE = []


def record(name: str, passed: bool, detail: str) -> None:
    """Collect one acceptance line; printed in the terminal summary."""
    line = f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}"
    ACCEPTANCE.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def appendix_g():
    return generate_appendix_g()


@pytest.fixture(scope="session")
def appendix_g_prepared(appendix_g):
    return prepare(appendix_g)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
