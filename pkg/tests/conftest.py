import pytest

from dropevap.geometry import build_grid
from dropevap.physics import DryingState, MaterialParams
from dropevap.timeloop import FieldSolver, volume_to_radius


@pytest.fixture(scope="session")
def water():
    p = MaterialParams()
    return p, DryingState.from_conditions(p, 60.0, 0.1)


@pytest.fixture(scope="session")
def desk_grid():
    return build_grid(32, 64, 50.0, 1.08)


@pytest.fixture(scope="session")
def small_grid():
    return build_grid(16, 32, 50.0, 1.08)


@pytest.fixture(scope="session")
def R0():
    return volume_to_radius(1.0)


@pytest.fixture
def stagnant_solver(water, small_grid):
    from dropevap.flowfields import Stagnant

    p, d = water
    return FieldSolver(small_grid, p, d, Stagnant())


ACCEPTANCE_LINES = {}


@pytest.fixture(scope="session")
def acceptance_log():
    """Records one PASS/FAIL line per acceptance criterion, echoed in the terminal summary."""
    def record(number, passed, detail):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'} {detail}"
        ACCEPTANCE_LINES[number] = line
        print(line)
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
