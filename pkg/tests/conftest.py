import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


ACCEPTANCE_RESULTS: dict[int, str] = {}


def record(criterion: int, passed: bool, detail: str) -> None:
    ACCEPTANCE_RESULTS[criterion] = f"[{'PASS' if passed else 'FAIL'}] criterion {criterion:2d}: {detail}"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(ACCEPTANCE_RESULTS[key])
