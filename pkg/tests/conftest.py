import numpy as np
import pytest

from sdmanifold.cost import CostSpec
from sdmanifold.plant import builtin_integrator, builtin_linear, builtin_unicycle
from sdmanifold.riccati import local_lq
from sdmanifold.shooting import ShootingOptions, seed_and_shoot

ROBOT_TARGET = np.array([0.0, 0.0, np.pi])
ROBOT_N = 15

# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def unicycle():
    return builtin_unicycle()


@pytest.fixture(scope="session")
def integrator():
    return builtin_integrator()


@pytest.fixture(scope="session")
def linear2():
    """A lightly damped oscillator with one input."""
    return builtin_linear([[0.0, 1.0], [-2.0, -0.3]], [[0.0], [1.0]])


def robot_spec(mode="intersample", M=64):
    return CostSpec(np.eye(3), np.eye(2), 1.0, mode, M)


_REFERENCE: dict = {}


def robot_reference(mode: str, N: int = ROBOT_N, M: int = 64):
    """Converged trajectory to (0, 0, pi); cached across the session."""
    key = (mode, N, M)
    if key not in _REFERENCE:
        plant = builtin_unicycle()
        spec = robot_spec(mode, M)
        lq = local_lq(plant, spec)
        _REFERENCE[key] = seed_and_shoot(plant, spec, ROBOT_TARGET, N, ShootingOptions(target_tol=1e-8),
                                         lq=lq)
    return _REFERENCE[key]
