import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from bppd.bp import bp_init
from bppd.dem import extract_dem
from bppd.graph import decompose_to_graph
from bppd.surface import build_memory_circuit


class Pipeline:
    """Circuit, model, matching graph and Tanner graph for one config."""

    def __init__(self, distance, rounds, p):
        self.distance, self.rounds, self.p = distance, rounds, p
        self.circuit = build_memory_circuit(distance, rounds, p)
        self.dem = extract_dem(self.circuit)
        self.graph = decompose_to_graph(self.dem)
        self.tanner = bp_init(self.dem)
        self.H = self.dem.check_matrix()

    def syndromes_from_dem(self, n, seed=0):
        rng = np.random.default_rng(seed)
        e = rng.random((n, self.dem.n_mechanisms)) < self.dem.priors
        return ((self.H @ e.astype(np.uint8).T).T % 2).astype(np.uint8)


_CACHE = {}


def pipeline(distance, rounds, p):
    key = (distance, rounds, p)
    if key not in _CACHE:
        _CACHE[key] = Pipeline(distance, rounds, p)
    return _CACHE[key]


@pytest.fixture(scope="session")
def d3():
    return pipeline(3, 3, 0.01)


@pytest.fixture(scope="session")
def d3_low():
    return pipeline(3, 3, 0.001)


@pytest.fixture(scope="session")
def d5():
    return pipeline(5, 5, 0.005)


def pytest_collection_modifyitems(config, items):
    if os.environ.get("BPPD_NIGHTLY"):
        return
    skip = pytest.mark.skip(reason="nightly job; set BPPD_NIGHTLY=1 to run")
    for item in items:
        if "nightly" in item.keywords:
            item.add_marker(skip)
