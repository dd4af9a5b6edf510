import pytest

from napspec import fixture_path, load_dataset, load_model
from napspec.network import Network

from . import oracles

MODEL = fixture_path("fixture_2x2.json")
DATA = fixture_path("fixture_2x2_data.csv")


@pytest.fixture(scope="session")
def net():
    return load_model(MODEL)


@pytest.fixture(scope="session")
def data():
    return load_dataset(DATA)


@pytest.fixture(scope="session")
def grid():
    """(X, pre, out) on the 400x400 grid, computed by the independent oracle."""
    return oracles.grid_eval(oracles.read_layers(MODEL))


def random_net(rng, sizes):
    ws = [rng.normal(size=(sizes[i + 1], sizes[i])) for i in range(len(sizes) - 1)]
    bs = [rng.normal(scale=0.5, size=sizes[i + 1]) for i in range(len(sizes) - 1)]
    return Network(ws, bs)
