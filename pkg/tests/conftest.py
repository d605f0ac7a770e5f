import pytest

from collapselab.core import make_probe_params


@pytest.fixture(scope="session")
def params():
    """Default probe: unit ball, standard-strength coupling."""
    return make_probe_params(1.0, 1.0, 0.5)


@pytest.fixture(scope="session")
def heavy_params():
    """Dense heavy probe with fast decoherence, slow oscillation."""
    return make_probe_params(1.0e4, 100.0, 0.5)
