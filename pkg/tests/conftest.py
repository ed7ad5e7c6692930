from os import environ
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from bhsim.config import ScenarioConfig

from .scenarios import five_node

SCENARIOS = Path(__file__).parent.parent / "scenarios"


@pytest.fixture
def five_node_config() -> ScenarioConfig:
    return five_node()


@pytest.fixture(scope="session")
def scenarios_dir() -> Path:
    return SCENARIOS


settings.register_profile(
    "tests", suppress_health_check=(HealthCheck.too_slow,), deadline=None
)
settings.register_profile("fast", settings.get_profile("tests"), max_examples=10)

settings.load_profile("fast" if "FAST" in environ else "tests")
