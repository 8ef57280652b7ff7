import numpy as np
import pytest

from platoon_codesign.codesign import (CostSpec, centralized_codesign,
                                       decentralized_codesign)
from platoon_codesign.platoon import VehicleParams

N_PLATOON = 9


@pytest.fixture(scope="session")
def platoon_params():
    return [VehicleParams() for _ in range(N_PLATOON)]


@pytest.fixture(scope="session")
def central_II(platoon_params):
    return centralized_codesign(platoon_params, "II", CostSpec())


@pytest.fixture(scope="session")
def central_I(platoon_params):
    return centralized_codesign(platoon_params, "I", CostSpec())


@pytest.fixture(scope="session")
def decentral_II(platoon_params):
    return decentralized_codesign(platoon_params, "II", CostSpec())


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[k][1])
