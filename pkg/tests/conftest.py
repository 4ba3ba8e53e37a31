"""Shared, session-scoped fixtures for the five-microphone head configuration.

The full designs take tens of seconds, so they are built once and shared
between the module tests and the acceptance checks.
"""

import functools

import numpy as np
import pytest

from polybeam.core import DesignGrid, Direction, PolynomialOrderSpec, head_geometry
from polybeam.design import design_rlsfi, design_rlsfip, desired_response
from polybeam.firsynth import synthesize
from polybeam.steer import build_steering_set

THETA = 56.4
PLD_PHIS = (0.0, 45.0, 90.0, 135.0, 180.0)
GAMMA_DB = -20.0
FIR_LEN = 1024


class Setup:
    def __init__(self):
        self.geom = head_geometry()
        self.grid = DesignGrid.uniform(theta_deg=THETA)
        self.spec = PolynomialOrderSpec(4, tuple(Direction(p, THETA) for p in PLD_PHIS))
        self.bhats = [desired_response(self.grid, d) for d in self.spec.plds]

    @functools.cached_property
    def sphere(self):
        return build_steering_set("sphere", self.geom, self.grid)

    @functools.cached_property
    def free_field(self):
        return build_steering_set("free_field", self.geom, self.grid)

    @functools.cached_property
    def rlsfip(self):
        return design_rlsfip(self.sphere, self.spec, self.bhats, GAMMA_DB)

    @functools.cached_property
    def rlsfip_ff(self):
        return design_rlsfip(self.free_field, self.spec, self.bhats, GAMMA_DB)

    @functools.cached_property
    def bank(self):
        return synthesize(self.rlsfip, FIR_LEN, self.grid.sample_rate_hz)

    @functools.cache
    def rlsfi(self, phi):
        look = Direction(phi, THETA)
        return design_rlsfi(self.sphere, look, desired_response(self.grid, look), GAMMA_DB)

    def bhat_values(self, direction):
        return desired_response(self.grid, direction).values


_SETUP = None


@pytest.fixture(scope="session")
def head():
    global _SETUP
    if _SETUP is None:
        _SETUP = Setup()
    return _SETUP


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(RESULTS):
        terminalreporter.write_line(RESULTS[num])
