import numpy as np
import pytest

from lattscat.core import Direction, make_random_potential
from lattscat.forward import IncidentWave, solve_forward
from lattscat.green import GreenEvaluator


@pytest.fixture(scope="session")
def ev2():
    return GreenEvaluator(2, 2.5)


@pytest.fixture(scope="session")
def ev3():
    return GreenEvaluator(3, 5.0, quad_tol=3e-9)


@pytest.fixture(scope="session")
def pot2():
    return make_random_potential(2, 1, 1.0, seed=11)


@pytest.fixture(scope="session")
def pot3():
    return make_random_potential(3, 1, 1.0, seed=12)


@pytest.fixture(scope="session")
def inc2():
    return IncidentWave.traveling(Direction((1.0, 0.0)), 2.5)


@pytest.fixture(scope="session")
def inc3():
    nu = np.array([3.0, 1.0, 2.0])
    nu /= np.linalg.norm(nu)
    return IncidentWave.traveling(Direction.from_vector(nu), 5.0)


@pytest.fixture(scope="session")
def sol2(pot2, inc2, ev2):
    return solve_forward(pot2, inc2, green=ev2)


@pytest.fixture(scope="session")
def sol3(pot3, inc3, ev3):
    return solve_forward(pot3, inc3, green=ev3)
