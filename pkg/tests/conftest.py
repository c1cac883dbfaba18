import math

import numpy as np
import pytest

from pqflow import knot, lift, spiral


@pytest.fixture(scope="session")
def arctan_cylinder():
    space = lift.arctan_space()
    return space, lift.build_cylinder(space, [0.0, 0.0], (-5.0, 5.0), hmax=0.05)


@pytest.fixture(scope="session")
def annulus():
    model = knot.KnotModel(1)
    ap = spiral.AnnulusParams(1.0, 2.0)
    start = [1.5 * math.cos(0.3), 1.5 * math.sin(0.3)]
    return knot.build_annulus_cylinder(model, ap, start, s_range=(-1000.0, 1000.0))


@pytest.fixture(scope="session")
def short_plane():
    model = knot.KnotModel(1)
    return knot.build_plane(model, spiral.PlaneParams(r0=1.0, n=1), s_range=(-2.0, 60.0))


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


ACCEPTANCE: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
