import numpy as np
import pytest

from caf.graph import build_network


def river_config():
    """Four-cluster river declaration (p=16, sizes 3/1/5/7) used across tests."""
    return {
        "clusters": [
            {"name": "rain", "variables": ["P1", "P2", "P3"]},
            {"name": "estuary", "variables": ["WL_B4"]},
            {"name": "dam", "variables": ["WL_D", "IF_D", "STR_D", "JUS_D", "OF_D"]},
            {
                "name": "bridges",
                "variables": ["WL_B1", "FL_B1", "WL_B0", "WL_B2", "FL_B2", "WL_B3", "FL_B3"],
            },
        ],
        "edges": [
            ["rain", "dam"],
            ["rain", "bridges"],
            ["estuary", "bridges"],
            ["dam", "bridges"],
        ],
        "target_variable": "WL_B0",
    }


@pytest.fixture
def river_net():
    return build_network(river_config())


def tiny_config():
    """Two-cluster declaration (p=4) small enough for exhaustive gradient checks."""
    return {
        "clusters": [
            {"name": "up", "variables": ["a", "b"]},
            {"name": "down", "variables": ["c", "d"]},
        ],
        "edges": [["up", "down"]],
        "target_variable": "d",
    }


@pytest.fixture
def tiny_net():
    return build_network(tiny_config())


@pytest.fixture(autouse=True)
def _no_global_numpy_seed():
    # all randomness must flow through caf.rng; catch accidental np.random use
    state = np.random.get_state()
    yield
    np.random.set_state(state)
