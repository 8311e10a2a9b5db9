import math
from importlib.resources import files

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from primplan.dynamics import State, SystemSpec
from primplan.env import OccupancyGrid, Workspace

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

DATA = files("primplan") / "data"


def scenario_path(name):
    return str(DATA / f"{name}.json")


@pytest.fixture
def acc_spec():
    return SystemSpec(m=2, q=2, u_max=1.0, du=3, dt=1.0, v_max=2.0, a_max=1.0)


@pytest.fixture
def jerk_spec():
    return SystemSpec(m=2, q=3, u_max=1.0, du=3, dt=0.5, v_max=2.0, a_max=2.0, j_max=1.0)


@pytest.fixture
def open_ws():
    return Workspace(OccupancyGrid.empty([0, 0], 0.25, (40, 40)))


def rest(pos, spec, **kw):
    return State.at_rest(np.asarray(pos, float), spec, **kw)


TWO_PI = 2 * math.pi
