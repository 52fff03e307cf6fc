import numpy as np
import pytest

from petident import default_scenario, simulate_ground_truth


@pytest.fixture(scope="session")
def scenario():
    return default_scenario()

@pytest.fixture(scope="session")
def known_cart_scenario():
    return default_scenario(mode="known_cart")


@pytest.fixture(scope="session")
def ground_truth(scenario):
    """(x_true, y_true) of the reference scenario."""
    return simulate_ground_truth(scenario)


@pytest.fixture(scope="session")
def template(scenario):
    return scenario.template()


@pytest.fixture()
def rng():
    return np.random.default_rng(20240817)
