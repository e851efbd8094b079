import os
import sys

from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

HERE = os.path.dirname(__file__)
if HERE not in sys.path:
    sys.path.insert(0, HERE)


import pytest  # noqa: E402

from skytest import worldgen  # noqa: E402
from skytest.harness import run_scenario  # noqa: E402


@pytest.fixture(scope="session")
def calm_scenario():
    return worldgen.generate("calm", 1, 1)[0][1]


@pytest.fixture(scope="session")
def calm_run(calm_scenario):
    return run_scenario(calm_scenario)
