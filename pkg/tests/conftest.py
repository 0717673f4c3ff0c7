import math

import pytest

from robinfem.assembly import BoundaryField
from robinfem.geometry import build_half_disk_mesh
from robinfem.harness import mms_data
from robinfem.solver import ProblemSpec

ACCEPTANCE_LINES = {}


def record(criterion: int, passed: bool, detail: str) -> None:
    ACCEPTANCE_LINES[criterion] = f"criterion {criterion:2d}: {'PASS' if passed else 'FAIL'}  {detail}"


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])


@pytest.fixture(scope="session")
def half_disk():
    """Level-1 upper half-disk, R = 1, Neumann/Robin split at pi/2."""
    return build_half_disk_mesh(1.0, math.pi / 2, 1)


def mms_spec(level, varphi=0.1, psi=0.1, nonlinear=True):
    vf, pf = BoundaryField.constant(varphi), BoundaryField.constant(psi)
    phi, g = mms_data(1.0, vf, pf, nonlinear=nonlinear)
    return ProblemSpec(build_half_disk_mesh(1.0, math.pi / 2, level), vf, pf, phi, g)


@pytest.fixture(scope="session")
def mms_spec_l1():
    return mms_spec(1)
