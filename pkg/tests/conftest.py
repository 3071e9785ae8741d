import numpy as np
import pytest
from hypothesis import HealthCheck, settings

import cset

settings.register_profile(
    "ci",
    deadline=None,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("ci")


@pytest.fixture
def three_class_row():
    # One row already in sorted order, the workhorse hand fixture.
    return cset.ScoreMatrix(
        np.array([[0.5, 0.3, 0.2]]), np.array([0]), "probabilities"
    )


@pytest.fixture
def three_class_sorted(three_class_row):
    return cset.sort_scores(three_class_row, seed=0)


def dirichlet_matrix(n, k, seed, concentration=None):
    """Small synthetic probability matrix for tests that need realistic rows."""
    spec = cset.SynthSpec(
        n=n,
        n_classes=k,
        concentration=0.0 if concentration is None else concentration,
        seed=seed,
    )
    _, observed = cset.generate(spec)
    return observed
