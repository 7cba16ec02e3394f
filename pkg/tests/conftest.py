import numpy as np
import pytest

from contactnet.dyads import build_design
from contactnet.spacesyntax import build_segment_graph, distance_matrix
from contactnet.synthetic import synthetic_linemap, synthetic_roster


@pytest.fixture(scope="session")
def roster50():
    return synthetic_roster(50, seed=11)


@pytest.fixture(scope="session")
def angular50(roster50):
    graph = build_segment_graph(synthetic_linemap(roster50))
    return distance_matrix(graph, roster50, "angular")


@pytest.fixture(scope="session")
def design50(roster50, angular50):
    return build_design(roster50, angular50)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def fitted_from_theta():
    """Wrap a known parameter vector as a FittedModel without fitting."""
    from contactnet.estimator import FittedModel, MLEResult
    from contactnet.likelihood import get_model

    def make(kind, theta, covariates):
        model = get_model(kind, tuple(covariates))
        x = np.asarray(model.pack(theta), dtype=float)
        k = len(x)
        result = MLEResult(x, 0.0, np.zeros(k), np.zeros((k, k)), None, 0, 1.0, True, "given")
        return FittedModel(kind, tuple(covariates), "angular", result, [], 0)

    return make
