import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from tethered_follower import Setpoints, SystemParams, feedforward  # noqa: E402
from tethered_follower.config import load_preset  # noqa: E402
from tethered_follower.sim import equilibrium_state, run_scenario  # noqa: E402


@pytest.fixture(scope="session")
def params():
    # flight-test values: 73 g robots, 30 g payload, 94/95 cm cables
    return SystemParams(m=0.073, M=0.030, l0=0.94, l1=0.95)


@pytest.fixture(scope="session")
def setpoints():
    return Setpoints.from_degrees(-40.0, 40.0)


@pytest.fixture(scope="session")
def u_star(params, setpoints):
    return feedforward(setpoints, params)


@pytest.fixture(scope="session")
def x_eq(params, setpoints):
    return equilibrium_state(setpoints, params)


@pytest.fixture(scope="session")
def u_eq(u_star):
    return np.array([0.0, u_star[0]])


def _run_preset(name):
    cfg = load_preset(name)
    trace = run_scenario(cfg.mode, cfg.params, cfg.sim, cfg.noise, cfg.leader,
                         cfg.estimator, cfg.gains, cfg.setpoints)
    return cfg, trace


@pytest.fixture(scope="session")
def openloop_run():
    return _run_preset("openloop")


@pytest.fixture(scope="session")
def truth_run():
    return _run_preset("truth")


@pytest.fixture(scope="session")
def estimated_run():
    return _run_preset("estimated")


@pytest.fixture(scope="session")
def two_robot_run():
    return _run_preset("two-robot")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = getattr(config, "_acceptance_results", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for line in results:
            terminalreporter.write_line(line)
