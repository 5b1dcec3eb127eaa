"""Shared pytest fixtures for the virialab test suite.

Sets up the matplotlib Agg backend and patches os.get_terminal_size before
any virialab import so __repr__ works under pytest capture. Trajectories
shared by several modules are integrated once per session.
"""

import os
import unittest.mock as mock

import matplotlib
matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
import pytest


# ---------------------------------------------------------------------------
# Support fixtures
# ---------------------------------------------------------------------------

@pytest.fixture(autouse=True, scope="session")
def patch_terminal_size():
    """Monkeypatch os.get_terminal_size so every __repr__ works in CI."""
    fake = os.terminal_size((120, 40))
    with mock.patch("os.get_terminal_size", return_value=fake):
        yield


@pytest.fixture(autouse=True)
def close_plots():
    """Close all matplotlib figures after every test."""
    yield
    plt.close("all")


@pytest.fixture(autouse=True)
def isolated_output(tmp_path, monkeypatch):
    """Default CLI output lands in the per-test temporary directory."""
    monkeypatch.setenv("VIRIALAB_OUT", str(tmp_path / "virialab-out"))


# ---------------------------------------------------------------------------
# Systems
# ---------------------------------------------------------------------------

@pytest.fixture(scope="session")
def two_body():
    from virialab import masssystem
    return masssystem([1.0, 1.0])


@pytest.fixture(scope="session")
def three_body():
    from virialab import masssystem
    return masssystem([1.0, 1.0, 1.0])


@pytest.fixture(scope="session")
def unequal_three_body():
    from virialab import masssystem
    return masssystem([1.0, 2.0, 3.0])


# ---------------------------------------------------------------------------
# Shared trajectories (session-scoped, integrated once)
# ---------------------------------------------------------------------------

KEPLER_ECCENTRICITIES = (0.0, 0.3, 0.5, 0.9)


@pytest.fixture(scope="session")
def kepler_orbits():
    """One period of the equal-mass Kepler orbit at h = 1/2 for several e.

    Returns a dict e -> (homographicorbit, trajectory).
    """
    from virialab import energylevel
    from virialab.families import kepler_orbit
    level = energylevel(0.5)
    return {e: kepler_orbit([1.0, 1.0], level, e, periods=1.0,
                            events=("virial-crossing", "turn-around"))
            for e in KEPLER_ECCENTRICITIES}


@pytest.fixture(scope="session")
def lagrange_run():
    """Equal-mass Lagrange relative equilibrium at h = 1/2, one period.

    Returns (level, state, trajectory, period).
    """
    from virialab import energylevel, propagate
    from virialab.families import lagrange_cc, relative_equilibrium, kepler_period
    level = energylevel(0.5)
    cc = lagrange_cc([1.0, 1.0, 1.0])
    s0 = relative_equilibrium(cc, level)
    period = kepler_period(cc, level)
    traj = propagate(s0, cc.sys, period, level=level, events=("virial-crossing",))
    return (level, s0, traj, period)


FIGURE_EIGHT_PERIOD = 6.32591398


@pytest.fixture(scope="session")
def figure_eight(three_body):
    """Equal-mass figure-eight choreography, one period."""
    from virialab import state, propagate
    x1 = np.array([0.97000436, -0.24308753])
    v3 = np.array([-0.93240737, -0.86473146])
    q = np.array([x1, -x1, [0.0, 0.0]])
    v = np.array([-v3/2, -v3/2, v3])
    s0 = state(0.0, q, v)
    return propagate(s0, three_body, FIGURE_EIGHT_PERIOD,
                     events=("virial-crossing", "turn-around"))
