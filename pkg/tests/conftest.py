import numpy as np
import pytest

from radarscout.core import ScenarioConfig, generate_scenario


@pytest.fixture(scope="session")
def base_config() -> ScenarioConfig:
    return ScenarioConfig()


@pytest.fixture(scope="session")
def radars0(base_config):
    """Ground-truth radar set for seed 0; shared because generation is pure."""
    return generate_scenario(base_config.with_seed(0))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
