"""Shared fixtures and the acceptance summary printed at the end of a run."""

import numpy as np
import pytest

from halobell.units import ExperimentConfig

ACCEPTANCE_LINES: list[str] = []


def record(criterion: str, passed: bool, detail: str) -> bool:
    """Note the outcome of one acceptance criterion for the summary."""
    line = f"[{'PASS' if passed else 'FAIL'}] {criterion}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def config():
    return ExperimentConfig()


@pytest.fixture
def boosted():
    """Dense, dark-free source used where nominal counts are too sparse."""
    return ExperimentConfig(detection_efficiency=1.0, n_bar=0.3, dark_rate=0.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
