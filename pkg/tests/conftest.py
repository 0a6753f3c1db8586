import numpy as np
import pytest
from helpers import build_corpus, cpwl_suite


@pytest.fixture(scope="session")
def mesh_corpus():
    """List of (name, mesh): the deterministic locally convex corpus."""
    return build_corpus()


@pytest.fixture(scope="session")
def cpwl_instances():
    """Ten deterministic small piece-list CPWL instances (d <= 2, m <= 5)."""
    return cpwl_suite()


@pytest.fixture()
def rng():
    return np.random.default_rng(987)
