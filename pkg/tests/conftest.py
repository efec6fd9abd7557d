from __future__ import annotations

import numpy as np
import pytest

from ifmg.geometry import get_levelset
from ifmg.meshgen import fit_mesh, make_uniform_mesh

CRITERIA: list[str] = []


def record(number: int, passed: bool, detail: str) -> str:
    line = f"CRITERION {number}: {'PASS' if passed else 'FAIL'} | {detail}"
    CRITERIA.append(line)
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(CRITERIA):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def circle():
    return get_levelset("circle", r=0.5)


@pytest.fixture(scope="session")
def circle_mesh16(circle):
    return fit_mesh(make_uniform_mesh(16), circle)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
