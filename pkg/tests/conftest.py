"""Shared fixtures: a throwaway config directory, the potential and planar fronts."""

import os
import tempfile

# the config directory is read when phasewiz is first imported
CONFIG_DIR = tempfile.mkdtemp(prefix="phasewiz-config-")
os.environ.setdefault("PHASEWIZ_CONFIG_DIR", CONFIG_DIR)

import numpy as np  # noqa: E402
import pytest  # noqa: E402

from phasewiz.models.field import Ball, Grid  # noqa: E402
from phasewiz.models.potential import canonical_potential  # noqa: E402
from phasewiz.models.profile import planar_solution, solve_profile  # noqa: E402

H = 1.0 / 128.0
ANGLE = np.deg2rad(30.0)
DIRECTION = np.array([np.cos(ANGLE), np.sin(ANGLE)])
CENTER = (0.5, 0.5)


def front_offset() -> float:
    """Puts the zero level set through the centre of the square."""
    return -float(np.dot(DIRECTION, CENTER))


@pytest.fixture(scope="session")
def pot():
    return canonical_potential()


@pytest.fixture(scope="session")
def profile(pot):
    return solve_profile(pot)


@pytest.fixture(scope="session")
def grid():
    return Grid.cube(2, 0.0, 1.0, H)


@pytest.fixture(scope="session")
def front(profile, grid):
    """The 30 degree planar front through the centre of the unit square, h = 1/128."""
    return planar_solution(profile, DIRECTION, front_offset(), grid)


@pytest.fixture(scope="session")
def coarse_front(profile):
    coarse = Grid.cube(2, 0.0, 1.0, 1.0 / 32.0)
    return planar_solution(profile, DIRECTION, front_offset(), coarse)


@pytest.fixture
def ball():
    return Ball(CENTER, 0.25)
