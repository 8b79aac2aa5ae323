import math

import pytest

from homing import HomingProblem, PowerLaw


def wiener_problem(**changes) -> HomingProblem:
    p = HomingProblem(PowerLaw(1.0, 0), PowerLaw(1.0, 0), PowerLaw(0.5, 0), lam=0.0, terminal_cost=1.0, d1=0.0, d2=1.0)
    return p.replace(**changes) if changes else p


def gbm_problem(**changes) -> HomingProblem:
    p = HomingProblem(PowerLaw(1.0, 1), PowerLaw(1.0, 2), PowerLaw(1.0, 1), lam=0.0, terminal_cost=2.0, d1=1.0, d2=math.e)
    return p.replace(**changes) if changes else p


def bessel_problem() -> HomingProblem:
    return HomingProblem(PowerLaw(1.0, -1), PowerLaw(1.0, 0), PowerLaw(1.0, 0), lam=0.0, terminal_cost=1.0, d1=0.5, d2=1.5)


@pytest.fixture
def wiener():
    return wiener_problem()


@pytest.fixture
def gbm():
    return gbm_problem()


@pytest.fixture
def bessel():
    return bessel_problem()


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
