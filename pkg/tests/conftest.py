from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from stochround.instances import GeneratorConfig, counterexample_instance, generate_sufl

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

DATA = Path(__file__).resolve().parents[1] / "data"


@pytest.fixture
def counterexample():
    return counterexample_instance()


@pytest.fixture
def small_sufl():
    return generate_sufl(GeneratorConfig(seed=5, n_facilities=4, n_clients=5, n_scenarios=3))


@pytest.fixture
def fractional_sufl():
    # set-system metric with cheap facilities gives a fractional LP optimum
    return generate_sufl(GeneratorConfig(seed=2, n_facilities=6, n_clients=8, n_scenarios=4,
                                         facility_cost=(1.0, 3.0), inflation=(1.0, 1.3), metric="set-system",
                                         set_size=3, near_range=(1.0, 1.2), demand_range=(0.5, 2.0)))
