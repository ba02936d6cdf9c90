import math

import numpy as np
import pytest

from eitstore.model import TWO_PI, default_params
from eitstore.scenarios import load_preset, run_scenario

GHZ = TWO_PI * 1e9


@pytest.fixture(scope="session")
def desk():
    return load_preset("eit-desk")


@pytest.fixture(scope="session")
def desk_result(desk):
    """One analysed eit-desk run (1 GHz, 0.6 us storage), shared across modules."""
    return run_scenario(desk)


@pytest.fixture
def params_1ghz():
    return default_params(1.0 * GHZ)


def random_state(rng):
    """Random physical density matrix in the basis (|-1>, |e>, |1>)."""
    a = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    rho = a @ a.conj().T
    return rho / np.trace(rho).real


def rms(x):
    x = np.asarray(x)
    return math.sqrt(float(np.mean(np.abs(x) ** 2)))


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
