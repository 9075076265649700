import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from twistcal.driver import random_data
from twistcal.geometry import KahlerPotential, TorusGrid

settings.register_profile("repo", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")


@pytest.fixture
def grid32():
    return TorusGrid(32)


@pytest.fixture
def grid64():
    return TorusGrid(64)


def random_potential(grid, amplitude=0.005, seed=0, max_mode=4):
    return KahlerPotential(grid, random_data(grid, amplitude, seed, max_mode))


def cos_x(grid, k=1):
    X, Y = grid.coords()
    return np.cos(2 * np.pi * k * X / grid.length)


def random_field(grid, seed=0, amplitude=1.0, max_mode=3):
    """Band-limited smooth field with sup norm ``amplitude`` and no positivity constraint."""
    rng = np.random.default_rng(seed)
    X, Y = grid.coords()
    u = np.zeros(grid.shape)
    for kx in range(-max_mode, max_mode + 1):
        for ky in range(-max_mode, max_mode + 1):
            c, d = rng.standard_normal(2)
            arg = 2 * np.pi * (kx * X + ky * Y) / grid.length
            u += c * np.cos(arg) + d * np.sin(arg)
    return u * (amplitude / np.abs(u).max())


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE = {}


def record_criterion(number, passed, detail):
    line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE[number] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
